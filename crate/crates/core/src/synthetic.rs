//! Synthetic highway traffic in the NGSIM source layout.
//!
//! Vehicles drive at constant speed in one lane, or perform a single lane change
//! with a raised-cosine lateral profile. Preceding and following vehicles are
//! assigned per frame as the nearest vehicle ahead and behind in the same lane.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{record_to_row, ColumnMap, FrameId, TrajectoryRecord, VehicleClass, VehicleId, FEET_TO_METERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub vehicles: usize,
    /// How many of the vehicles change lane once.
    pub lane_changers: usize,
    pub lanes: u32,
    pub lane_width_m: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
    /// Lane-change duration in seconds.
    pub lane_change_s: f64,
    /// Standard deviation of the position noise added to every record, meters.
    pub noise_m: f64,
    /// Vehicles enter at a uniformly drawn frame in `1..=max_entry_frame`.
    pub max_entry_frame: u32,
    /// Entry positions are drawn in `0..entry_zone_m`.
    pub entry_zone_m: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vehicles: 20,
            lane_changers: 4,
            lanes: 5,
            lane_width_m: 3.66,
            min_frames: 300,
            max_frames: 400,
            min_speed_mps: 8.0,
            max_speed_mps: 18.0,
            lane_change_s: 4.0,
            noise_m: 0.02,
            max_entry_frame: 200,
            entry_zone_m: 30.0,
            seed: 1,
        }
    }
}

struct Plan {
    id: VehicleId,
    class: VehicleClass,
    entry: FrameId,
    frames: usize,
    y0: f64,
    speed: f64,
    lane: u32,
    /// (first frame index of the maneuver, target lane)
    change: Option<(usize, u32)>,
}

/// Rounds to the 0.001 ft resolution of the source files, so records survive a
/// write/parse round trip exactly.
fn quantize(meters: f64) -> f64 {
    (meters / FEET_TO_METERS * 1000.0).round() / 1000.0 * FEET_TO_METERS
}

fn lane_center(lane: u32, width: f64) -> f64 {
    (lane as f64 - 0.5) * width
}

/// Lateral position and lane id at step `k` of a vehicle's life.
fn lateral(plan: &Plan, k: usize, spec: &SynthSpec, change_frames: usize) -> (f64, u32) {
    let from = lane_center(plan.lane, spec.lane_width_m);
    match plan.change {
        Some((start, to_lane)) if k >= start => {
            let to = lane_center(to_lane, spec.lane_width_m);
            let s = ((k - start) as f64 / change_frames as f64).min(1.0);
            let x = from + (to - from) * (1.0 - (std::f64::consts::PI * s).cos()) / 2.0;
            let lane = if s >= 0.5 { to_lane } else { plan.lane };
            (x, lane)
        }
        _ => (from, plan.lane),
    }
}

/// Generates trajectory records in meters, sorted by vehicle then frame, with
/// preceding and following links filled in.
pub fn generate(spec: &SynthSpec) -> Vec<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let change_frames = (spec.lane_change_s * crate::FRAMES_PER_SECOND as f64).round().max(1.0) as usize;
    let lanes = spec.lanes.max(1);
    let mut plans = Vec::with_capacity(spec.vehicles);
    for v in 0..spec.vehicles {
        let frames = rng.random_range(spec.min_frames..=spec.max_frames.max(spec.min_frames));
        let lane = rng.random_range(1..=lanes);
        let class = match rng.random_range(0..20) {
            0 => VehicleClass::Motorcycle,
            1 | 2 => VehicleClass::Truck,
            _ => VehicleClass::Car,
        };
        let change = if v < spec.lane_changers && lanes > 1 {
            let to_lane = if lane == 1 || (lane < lanes && rng.random_bool(0.5)) { lane + 1 } else { lane - 1 };
            let latest = frames.saturating_sub(change_frames + 20).max(21);
            Some((rng.random_range(20..latest.max(21)), to_lane))
        } else {
            None
        };
        plans.push(Plan {
            id: v as VehicleId + 1,
            class,
            entry: rng.random_range(1..=spec.max_entry_frame.max(1)),
            frames,
            y0: rng.random_range(0.0..spec.entry_zone_m.max(1e-9)),
            speed: rng.random_range(spec.min_speed_mps..spec.max_speed_mps.max(spec.min_speed_mps + 1e-9)),
            lane,
            change,
        });
    }
    let noise = Normal::new(0.0, spec.noise_m.max(0.0)).expect("finite standard deviation");
    let mut records = Vec::new();
    for plan in &plans {
        for k in 0..plan.frames {
            let (x, lane) = lateral(plan, k, spec, change_frames);
            let y = plan.y0 + plan.speed * k as f64 * crate::FRAME_PERIOD;
            records.push(TrajectoryRecord {
                vehicle_id: plan.id,
                frame_id: plan.entry + k as FrameId,
                local_x: quantize((x + noise.sample(&mut rng)).max(0.0)),
                local_y: quantize((y + noise.sample(&mut rng)).max(0.0)),
                lane_id: lane,
                vehicle_class: plan.class,
                preceding_id: None,
                following_id: None,
            });
        }
    }
    link_neighbors(&mut records);
    records
}

/// Nearest vehicle ahead / behind in the same lane at every frame.
fn link_neighbors(records: &mut [TrajectoryRecord]) {
    let mut by_lane: BTreeMap<(FrameId, u32), Vec<(f64, VehicleId, usize)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_lane.entry((r.frame_id, r.lane_id)).or_default().push((r.local_y, r.vehicle_id, i));
    }
    for vehicles in by_lane.values_mut() {
        vehicles.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for j in 0..vehicles.len() {
            let (y, _, i) = vehicles[j];
            let ahead = vehicles[j + 1..].iter().find(|v| v.0 > y).map(|v| v.1);
            let behind = vehicles[..j].iter().rev().find(|v| v.0 < y).map(|v| v.1);
            records[i].preceding_id = ahead;
            records[i].following_id = behind;
        }
    }
}

/// Writes records in the source layout of `map` (feet for the default map).
pub fn write_source_file<W: Write>(mut out: W, records: &[TrajectoryRecord], map: &ColumnMap) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", record_to_row(r, map))?;
    }
    out.flush()
}
