//! Surrounding-vehicle lookup and per-frame feature construction.
//!
//! For each target vehicle and frame, nine roles are resolved:
//!
//! ```text
//!        fl    f ── ff (ahead of f)
//!        l   targ   r
//!        bl    b    br
//! ```
//!
//! `l` and `r` are the vehicles in the immediately adjacent lanes (lane id minus
//! one and plus one) with the smallest longitudinal gap to the target; ties go to
//! the vehicle ahead. `f`, `fl`, `fr` and `ff` follow `preceding_id` links from `targ`, `l`,
//! `r` and `f`; `b`, `bl` and `br` are the vehicles whose leader is `targ`, `l`
//! and `r`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{FrameId, VehicleClass, VehicleId};
use crate::smoothing::SmoothedTrack;

#[derive(Debug, Error, PartialEq)]
pub enum NeighborhoodError {
    #[error("frame {frame}: preceding links form a cycle through vehicle {vehicle}")]
    PrecedingCycle { frame: FrameId, vehicle: VehicleId },
    #[error("vehicle {vehicle} appears twice in frame {frame}")]
    DuplicateVehicle { frame: FrameId, vehicle: VehicleId },
    #[error("vehicle {vehicle} is not present at frame {frame}")]
    TargetAbsent { frame: FrameId, vehicle: VehicleId },
    #[error("feature dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for NeighborhoodError {
    fn from(e: std::io::Error) -> Self {
        NeighborhoodError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NeighborRole {
    L,
    R,
    F,
    B,
    FL,
    FR,
    BL,
    BR,
    FF,
}

impl NeighborRole {
    /// Block order of the feature vector.
    pub const ALL: [NeighborRole; 9] = [
        NeighborRole::L,
        NeighborRole::R,
        NeighborRole::F,
        NeighborRole::B,
        NeighborRole::FL,
        NeighborRole::FR,
        NeighborRole::BL,
        NeighborRole::BR,
        NeighborRole::FF,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NeighborRole::L => "l",
            NeighborRole::R => "r",
            NeighborRole::F => "f",
            NeighborRole::B => "b",
            NeighborRole::FL => "fl",
            NeighborRole::FR => "fr",
            NeighborRole::BL => "bl",
            NeighborRole::BR => "br",
            NeighborRole::FF => "ff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleAt {
    pub lane: u32,
    pub y: f64,
    pub preceding: Option<VehicleId>,
}

/// Everything known about one frame.
#[derive(Debug, Clone, Default)]
pub struct FrameScene {
    /// lane id → (vehicle, y) sorted by y, then id.
    pub lanes: BTreeMap<u32, Vec<(VehicleId, f64)>>,
    pub vehicles: HashMap<VehicleId, VehicleAt>,
    /// Inverse of the preceding links; with several claimants the closest behind wins.
    pub follower: HashMap<VehicleId, VehicleId>,
}

impl FrameScene {
    pub fn preceding(&self, id: VehicleId) -> Option<VehicleId> {
        self.vehicles.get(&id)?.preceding.filter(|p| self.vehicles.contains_key(p))
    }

    pub fn follower(&self, id: VehicleId) -> Option<VehicleId> {
        self.follower.get(&id).copied()
    }

    /// Vehicle in `lane` with the smallest |y − y_ref|; ties go to the one ahead, then the lower id.
    pub fn closest_in_lane(&self, lane: u32, y_ref: f64) -> Option<VehicleId> {
        let list = self.lanes.get(&lane)?;
        // first vehicle at or ahead of y_ref
        let split = list.partition_point(|&(_, y)| y < y_ref);
        let mut best: Option<(f64, bool, VehicleId)> = None;
        let mut consider = |id: VehicleId, y: f64| {
            let gap = (y - y_ref).abs();
            let behind = y < y_ref;
            let key = (gap, behind, id);
            if best.is_none_or(|b| cmp_key(key, b).is_lt()) {
                best = Some(key);
            }
        };
        // Only the nearest distinct y on each side can win; scan the ties around them.
        if let Some(&(_, y_ahead)) = list.get(split) {
            for &(id, y) in list[split..].iter().take_while(|&&(_, y)| y == y_ahead) {
                consider(id, y);
            }
        }
        if split > 0 {
            let y_behind = list[split - 1].1;
            for &(id, y) in list[..split].iter().rev().take_while(|&&(_, y)| y == y_behind) {
                consider(id, y);
            }
        }
        best.map(|b| b.2)
    }
}

fn cmp_key(a: (f64, bool, VehicleId), b: (f64, bool, VehicleId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

#[derive(Debug, Clone, Default)]
pub struct SceneIndex {
    pub frames: HashMap<FrameId, FrameScene>,
}

impl SceneIndex {
    pub fn frame(&self, frame: FrameId) -> Option<&FrameScene> {
        self.frames.get(&frame)
    }
}

pub fn build_scene_index(tracks: &[SmoothedTrack]) -> Result<SceneIndex, NeighborhoodError> {
    let mut frames: HashMap<FrameId, FrameScene> = HashMap::new();
    for track in tracks {
        for i in 0..track.len() {
            let frame = track.frame_ids[i];
            let scene = frames.entry(frame).or_default();
            let at = VehicleAt { lane: track.lane_ids[i], y: track.y[i], preceding: track.preceding[i] };
            if scene.vehicles.insert(track.vehicle_id, at).is_some() {
                return Err(NeighborhoodError::DuplicateVehicle { frame, vehicle: track.vehicle_id });
            }
            scene.lanes.entry(at.lane).or_default().push((track.vehicle_id, at.y));
        }
    }
    for (&frame, scene) in frames.iter_mut() {
        for list in scene.lanes.values_mut() {
            list.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        let mut follower: HashMap<VehicleId, (f64, VehicleId)> = HashMap::new();
        for (&id, at) in &scene.vehicles {
            if let Some(leader) = at.preceding {
                let e = follower.entry(leader).or_insert((at.y, id));
                if at.y > e.0 || (at.y == e.0 && id < e.1) {
                    *e = (at.y, id);
                }
            }
        }
        scene.follower = follower.into_iter().map(|(k, (_, v))| (k, v)).collect();
        check_acyclic(frame, scene)?;
    }
    Ok(SceneIndex { frames })
}

fn check_acyclic(frame: FrameId, scene: &FrameScene) -> Result<(), NeighborhoodError> {
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state: HashMap<VehicleId, u8> = HashMap::with_capacity(scene.vehicles.len());
    let mut ids: Vec<VehicleId> = scene.vehicles.keys().copied().collect();
    ids.sort_unstable();
    for start in ids {
        let mut path = Vec::new();
        let mut current = Some(start);
        while let Some(id) = current {
            match state.get(&id).copied().unwrap_or(0) {
                1 => return Err(NeighborhoodError::PrecedingCycle { frame, vehicle: id }),
                2 => break,
                _ => {}
            }
            state.insert(id, 1);
            path.push(id);
            current = scene.preceding(id);
        }
        for id in path {
            state.insert(id, 2);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeighborSet {
    pub ids: [Option<VehicleId>; 9],
}

impl NeighborSet {
    pub fn get(&self, role: NeighborRole) -> Option<VehicleId> {
        self.ids[role.index()]
    }

    fn set(&mut self, role: NeighborRole, id: Option<VehicleId>) {
        self.ids[role.index()] = id;
    }

    /// Checks the leader/follower relations between roles against the scene.
    pub fn is_consistent(&self, target: VehicleId, scene: &FrameScene) -> bool {
        use NeighborRole::*;
        let leader_is = |role: NeighborRole, of: Option<VehicleId>| match (self.get(role), of) {
            (Some(id), Some(of)) => scene.preceding(id) == Some(of),
            (Some(_), None) => false,
            (None, _) => true,
        };
        let f_ok = self.get(F) == scene.preceding(target);
        let ff_ok = match self.get(FF) {
            Some(ff) => self.get(F).and_then(|f| scene.preceding(f)) == Some(ff),
            None => true,
        };
        f_ok && ff_ok && leader_is(B, Some(target)) && leader_is(BL, self.get(L)) && leader_is(BR, self.get(R))
    }
}

pub fn find_neighbors(target: VehicleId, frame: FrameId, index: &SceneIndex) -> Result<NeighborSet, NeighborhoodError> {
    let scene = index.frame(frame).ok_or(NeighborhoodError::TargetAbsent { frame, vehicle: target })?;
    let at = scene.vehicles.get(&target).ok_or(NeighborhoodError::TargetAbsent { frame, vehicle: target })?;
    let mut set = NeighborSet::default();
    let l = at.lane.checked_sub(1).and_then(|lane| scene.closest_in_lane(lane, at.y));
    let r = scene.closest_in_lane(at.lane + 1, at.y);
    let f = scene.preceding(target);
    set.set(NeighborRole::L, l);
    set.set(NeighborRole::R, r);
    set.set(NeighborRole::F, f);
    set.set(NeighborRole::FF, f.and_then(|f| scene.preceding(f)));
    set.set(NeighborRole::FL, l.and_then(|l| scene.preceding(l)));
    set.set(NeighborRole::FR, r.and_then(|r| scene.preceding(r)));
    set.set(NeighborRole::B, scene.follower(target));
    set.set(NeighborRole::BL, l.and_then(|l| scene.follower(l)));
    set.set(NeighborRole::BR, r.and_then(|r| scene.follower(r)));
    Ok(set)
}

/// Largest |TTC| in seconds.
pub const TTC_LIMIT: f64 = 100.0;
/// Closing speeds below this (m/s) are treated as zero.
pub const TTC_DEAD_BAND: f64 = 0.01;

/// Signed time to collision Δy / Δvy, clamped to ±[`TTC_LIMIT`].
pub fn compute_ttc(dy: f64, dvy: f64) -> f64 {
    if dvy.abs() >= TTC_DEAD_BAND {
        (dy / dvy).clamp(-TTC_LIMIT, TTC_LIMIT)
    } else if dy == 0.0 {
        0.0
    } else {
        dy.signum() * TTC_LIMIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetFeatures {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub class: f64,
}

/// Features of one surrounding vehicle relative to the target. All zero when the role is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoleFeatures {
    pub vx: f64,
    /// vy_targ − vy_p
    pub dvy: f64,
    /// x_p − x_targ
    pub dx: f64,
    /// y_p − y_targ
    pub dy: f64,
    pub ttc: f64,
    pub class: f64,
}

/// Unscaled features for one (vehicle, frame).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureFrame {
    pub target: TargetFeatures,
    /// Indexed by [`NeighborRole::index`].
    pub roles: [RoleFeatures; 9],
}

/// Which optional blocks enter the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub use_type: bool,
    pub use_ff: bool,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout { use_type: false, use_ff: true }
    }
}

/// Kind of each input column, used for scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Distance,
    LongVelocity,
    LateralVelocity,
    Ttc,
    Class,
}

impl FeatureLayout {
    pub fn roles(&self) -> Vec<NeighborRole> {
        NeighborRole::ALL.into_iter().filter(|&r| self.use_ff || r != NeighborRole::FF).collect()
    }

    /// 4 (+1) target columns plus 5 (+1) per role: 49 by default, 59 with types, 44 without ff.
    pub fn width(&self) -> usize {
        let t = usize::from(self.use_type);
        4 + t + self.roles().len() * (5 + t)
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        use FeatureKind::*;
        let mut kinds = vec![Distance, Distance, LateralVelocity, LongVelocity];
        if self.use_type {
            kinds.push(Class);
        }
        for _ in self.roles() {
            kinds.extend([LateralVelocity, LongVelocity, Distance, Distance, Ttc]);
            if self.use_type {
                kinds.push(Class);
            }
        }
        kinds
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["x_targ", "y_targ", "vx_targ", "vy_targ"].map(String::from).to_vec();
        if self.use_type {
            names.push("type_targ".into());
        }
        for role in self.roles() {
            let p = role.name();
            for f in ["vx", "dvy", "dx", "dy", "ttc"] {
                names.push(format!("{f}_{p}"));
            }
            if self.use_type {
                names.push(format!("type_{p}"));
            }
        }
        names
    }
}

impl FeatureFrame {
    /// Unscaled input vector in block order: target, then l, r, f, b, fl, fr, bl, br, ff.
    pub fn to_vector(&self, layout: &FeatureLayout) -> Vec<f64> {
        let mut v = Vec::with_capacity(layout.width());
        let t = &self.target;
        v.extend([t.x, t.y, t.vx, t.vy]);
        if layout.use_type {
            v.push(t.class);
        }
        for role in layout.roles() {
            let p = &self.roles[role.index()];
            v.extend([p.vx, p.dvy, p.dx, p.dy, p.ttc]);
            if layout.use_type {
                v.push(p.class);
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub class: VehicleClass,
}

/// (vehicle, frame) → smoothed state.
pub struct StateLookup<'a> {
    by_vehicle: HashMap<VehicleId, Vec<&'a SmoothedTrack>>,
}

impl<'a> StateLookup<'a> {
    pub fn new(tracks: &'a [SmoothedTrack]) -> Self {
        let mut by_vehicle: HashMap<VehicleId, Vec<&SmoothedTrack>> = HashMap::new();
        for t in tracks {
            by_vehicle.entry(t.vehicle_id).or_default().push(t);
        }
        StateLookup { by_vehicle }
    }

    pub fn state(&self, vehicle: VehicleId, frame: FrameId) -> Option<VehicleState> {
        self.by_vehicle.get(&vehicle)?.iter().find_map(|t| {
            t.index_of(frame).map(|i| VehicleState {
                x: t.x[i],
                y: t.y[i],
                vx: t.vx[i],
                vy: t.vy[i],
                class: t.vehicle_class,
            })
        })
    }
}

/// Feature frame for `target` at its sample `index`. Neighbors without a smoothed
/// state at that frame are treated as absent.
pub fn extract_features(target: &SmoothedTrack, index: usize, neighbors: &NeighborSet, states: &StateLookup) -> FeatureFrame {
    let frame = target.frame_ids[index];
    let me = TargetFeatures {
        x: target.x[index],
        y: target.y[index],
        vx: target.vx[index],
        vy: target.vy[index],
        class: target.vehicle_class.encode(),
    };
    let mut out = FeatureFrame { target: me, roles: [RoleFeatures::default(); 9] };
    for role in NeighborRole::ALL {
        let Some(state) = neighbors.get(role).and_then(|id| states.state(id, frame)) else {
            continue;
        };
        let dvy = me.vy - state.vy;
        let dy = state.y - me.y;
        out.roles[role.index()] = RoleFeatures {
            vx: state.vx,
            dvy,
            dx: state.x - me.x,
            dy,
            ttc: compute_ttc(dy, dvy),
            class: state.class.encode(),
        };
    }
    out
}

/// All feature frames of one smoothed track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFeatures {
    pub vehicle_id: VehicleId,
    pub frame_ids: Vec<FrameId>,
    pub frames: Vec<FeatureFrame>,
}

/// Runs neighbor search and feature extraction over every frame of every track.
pub fn extract_track_features(tracks: &[SmoothedTrack]) -> Result<Vec<TrackFeatures>, NeighborhoodError> {
    let index = build_scene_index(tracks)?;
    let states = StateLookup::new(tracks);
    tracks
        .par_iter()
        .map(|track| {
            let frames = (0..track.len())
                .map(|i| {
                    let set = find_neighbors(track.vehicle_id, track.frame_ids[i], &index)?;
                    Ok(extract_features(track, i, &set, &states))
                })
                .collect::<Result<Vec<_>, NeighborhoodError>>()?;
            Ok(TrackFeatures { vehicle_id: track.vehicle_id, frame_ids: track.frame_ids.clone(), frames })
        })
        .collect()
}

const FULL: FeatureLayout = FeatureLayout { use_type: true, use_ff: true };

/// Writes every feature (types and ff included) unscaled, one row per (vehicle, frame).
pub fn write_feature_dump<W: Write>(mut out: W, tracks: &[TrackFeatures]) -> std::io::Result<()> {
    writeln!(out, "vehicle_id,frame_id,{}", FULL.column_names().join(","))?;
    for t in tracks {
        for (frame, f) in t.frame_ids.iter().zip(&t.frames) {
            let values: Vec<String> = f.to_vector(&FULL).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{},{}", t.vehicle_id, frame, values.join(","))?;
        }
    }
    Ok(())
}

/// Reads a feature dump back. Rows of the same vehicle with consecutive frames form one track.
pub fn read_feature_dump<R: BufRead>(reader: R) -> Result<Vec<TrackFeatures>, NeighborhoodError> {
    let expected = 2 + FULL.width();
    let mut tracks: Vec<TrackFeatures> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if i == 0 {
            if !line.starts_with("vehicle_id,frame_id,") {
                return Err(NeighborhoodError::Dump { line: 1, message: "missing header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(NeighborhoodError::Dump {
                line: number,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let bad = |m: String| NeighborhoodError::Dump { line: number, message: m };
        let vehicle: VehicleId = fields[0].parse().map_err(|_| bad(format!("bad vehicle id {:?}", fields[0])))?;
        let frame: FrameId = fields[1].parse().map_err(|_| bad(format!("bad frame id {:?}", fields[1])))?;
        let values = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let ff = from_full_vector(&values);
        match tracks.last_mut() {
            Some(t) if t.vehicle_id == vehicle && t.frame_ids.last().map(|&f| f + 1) == Some(frame) => {
                t.frame_ids.push(frame);
                t.frames.push(ff);
            }
            _ => tracks.push(TrackFeatures { vehicle_id: vehicle, frame_ids: vec![frame], frames: vec![ff] }),
        }
    }
    Ok(tracks)
}

fn from_full_vector(v: &[f64]) -> FeatureFrame {
    let mut f = FeatureFrame {
        target: TargetFeatures { x: v[0], y: v[1], vx: v[2], vy: v[3], class: v[4] },
        roles: [RoleFeatures::default(); 9],
    };
    for (k, block) in v[5..].chunks_exact(6).enumerate() {
        f.roles[k] = RoleFeatures {
            vx: block[0],
            dvy: block[1],
            dx: block[2],
            dy: block[3],
            ttc: block[4],
            class: block[5],
        };
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A one-frame track for scene tests.
    fn vehicle(id: VehicleId, lane: u32, x: f64, y: f64, vy: f64, preceding: Option<VehicleId>) -> SmoothedTrack {
        SmoothedTrack {
            vehicle_id: id,
            vehicle_class: VehicleClass::Car,
            frame_ids: vec![1],
            x: vec![x],
            y: vec![y],
            vx: vec![0.0],
            vy: vec![vy],
            lane_ids: vec![lane],
            preceding: vec![preceding],
            following: vec![None],
        }
    }

    #[test]
    fn lane_lists_sorted_and_followers_inverted() {
        let tracks = vec![vehicle(1, 2, 5.0, 30.0, 10.0, None), vehicle(2, 2, 5.0, 10.0, 10.0, Some(1))];
        let index = build_scene_index(&tracks).unwrap();
        let scene = index.frame(1).unwrap();
        assert_eq!(scene.lanes[&2], vec![(2, 10.0), (1, 30.0)]);
        assert_eq!(scene.follower(1), Some(2));
        assert_eq!(scene.follower(2), None);
    }

    #[test]
    fn merging_followers_allowed_cycles_rejected() {
        let merge = vec![
            vehicle(1, 2, 5.0, 50.0, 10.0, None),
            vehicle(2, 2, 5.0, 20.0, 10.0, Some(1)),
            vehicle(3, 3, 8.0, 40.0, 10.0, Some(1)),
        ];
        let index = build_scene_index(&merge).unwrap();
        assert_eq!(index.frame(1).unwrap().follower(1), Some(3));

        let cycle = vec![vehicle(1, 2, 5.0, 50.0, 10.0, Some(2)), vehicle(2, 2, 5.0, 20.0, 10.0, Some(1))];
        assert!(matches!(build_scene_index(&cycle), Err(NeighborhoodError::PrecedingCycle { frame: 1, .. })));
    }

    #[test]
    fn lone_vehicle_has_no_neighbors() {
        let index = build_scene_index(&[vehicle(1, 2, 5.0, 30.0, 10.0, None)]).unwrap();
        let set = find_neighbors(1, 1, &index).unwrap();
        assert_eq!(set, NeighborSet::default());
        assert!(matches!(find_neighbors(9, 1, &index), Err(NeighborhoodError::TargetAbsent { .. })));
        assert!(matches!(find_neighbors(1, 2, &index), Err(NeighborhoodError::TargetAbsent { .. })));
    }

    #[test]
    fn left_is_smallest_gap() {
        let tracks = vec![
            vehicle(1, 3, 9.0, 100.0, 10.0, None),
            vehicle(2, 2, 5.0, 90.0, 10.0, None),
            vehicle(3, 2, 5.0, 115.0, 10.0, None),
        ];
        let index = build_scene_index(&tracks).unwrap();
        let set = find_neighbors(1, 1, &index).unwrap();
        assert_eq!(set.get(NeighborRole::L), Some(2));
        assert_eq!(set.get(NeighborRole::R), None);
    }

    #[test]
    fn ties_prefer_vehicle_ahead() {
        let tracks = vec![
            vehicle(1, 3, 9.0, 100.0, 10.0, None),
            vehicle(2, 4, 13.0, 90.0, 10.0, None),
            vehicle(3, 4, 13.0, 110.0, 10.0, None),
        ];
        let index = build_scene_index(&tracks).unwrap();
        assert_eq!(find_neighbors(1, 1, &index).unwrap().get(NeighborRole::R), Some(3));
    }

    #[test]
    fn leader_chain() {
        // A <- B <- C in one lane, target C
        let tracks = vec![
            vehicle(10, 2, 5.0, 80.0, 10.0, None),
            vehicle(11, 2, 5.0, 60.0, 10.0, Some(10)),
            vehicle(12, 2, 5.0, 40.0, 10.0, Some(11)),
        ];
        let index = build_scene_index(&tracks).unwrap();
        let set = find_neighbors(12, 1, &index).unwrap();
        assert_eq!(set.get(NeighborRole::F), Some(11));
        assert_eq!(set.get(NeighborRole::FF), Some(10));
        assert_eq!(set.get(NeighborRole::B), None);
        assert!(set.is_consistent(12, index.frame(1).unwrap()));
    }

    #[test]
    fn ttc_rules() {
        assert_eq!(compute_ttc(50.0, 5.0), 10.0);
        assert_eq!(compute_ttc(50.0, 0.0), 100.0);
        assert_eq!(compute_ttc(-20.0, 0.005), -100.0);
        assert_eq!(compute_ttc(0.0, 0.0), 0.0);
        assert_eq!(compute_ttc(-30.0, 0.02), -100.0);
        assert_eq!(compute_ttc(-30.0, -3.0), 10.0);
    }

    #[test]
    fn ttc_sign_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let dy: f64 = rng.random_range(-100.0..100.0);
            let dvy: f64 = rng.random_range(-10.0..10.0);
            if dvy.abs() >= TTC_DEAD_BAND && dy != 0.0 {
                assert_eq!(compute_ttc(dy, dvy).signum(), dy.signum() * dvy.signum());
            }
        }
    }

    #[test]
    fn relative_speed_sign_and_absent_blocks() {
        let tracks = vec![vehicle(1, 2, 5.0, 30.0, 30.0, Some(2)), vehicle(2, 2, 5.5, 50.0, 25.0, None)];
        let index = build_scene_index(&tracks).unwrap();
        let states = StateLookup::new(&tracks);
        let set = find_neighbors(1, 1, &index).unwrap();
        let f = extract_features(&tracks[0], 0, &set, &states);
        let block = f.roles[NeighborRole::F.index()];
        assert_eq!(block.dvy, 5.0);
        assert_eq!(block.dy, 20.0);
        assert_eq!(block.ttc, 4.0);
        assert!((block.dx - 0.5).abs() < 1e-15);
        assert_eq!(f.roles[NeighborRole::R.index()], RoleFeatures::default());
    }

    #[test]
    fn four_vehicle_scene_matches_hand_values() {
        // target 1 in lane 2; leader 2 ahead; left 3 in lane 1; right 4 in lane 3 followed by nobody
        let mut t1 = vehicle(1, 2, 5.6, 100.0, 20.0, Some(2));
        t1.vx = vec![0.3];
        t1.vehicle_class = VehicleClass::Truck;
        let mut t2 = vehicle(2, 2, 5.4, 130.0, 18.0, None);
        t2.vx = vec![-0.1];
        let mut t3 = vehicle(3, 1, 1.8, 95.0, 22.0, None);
        t3.vehicle_class = VehicleClass::Motorcycle;
        let t4 = vehicle(4, 3, 9.1, 100.0, 20.0, None);
        let tracks = vec![t1, t2, t3, t4];
        let index = build_scene_index(&tracks).unwrap();
        let states = StateLookup::new(&tracks);
        let set = find_neighbors(1, 1, &index).unwrap();
        let frame = extract_features(&tracks[0], 0, &set, &states);
        let v = frame.to_vector(&FeatureLayout { use_type: true, use_ff: true });
        let mut expected = vec![5.6, 100.0, 0.3, 20.0, 1.0];
        // l = 3: vx 0, dvy 20-22, dx 1.8-5.6, dy -5, ttc -5/-2
        expected.extend([0.0, -2.0, 1.8 - 5.6, -5.0, 2.5, -1.0]);
        // r = 4: dvy 0, dy 0 -> ttc 0
        expected.extend([0.0, 0.0, 9.1 - 5.6, 0.0, 0.0, 0.0]);
        // f = 2: vx -0.1, dvy 2, dx -0.2, dy 30, ttc 15
        expected.extend([-0.1, 2.0, 5.4 - 5.6, 30.0, 15.0, 0.0]);
        // b, fl, fr, bl, br, ff absent
        expected.extend([0.0; 36]);
        assert_eq!(v.len(), 59);
        for (i, (a, b)) in v.iter().zip(&expected).enumerate() {
            assert!((a - b).abs() < 1e-12, "column {i}: {a} vs {b}");
        }
    }

    #[test]
    fn layout_widths() {
        assert_eq!(FeatureLayout::default().width(), 49);
        assert_eq!(FeatureLayout { use_type: true, use_ff: true }.width(), 59);
        assert_eq!(FeatureLayout { use_type: false, use_ff: false }.width(), 44);
        for layout in [FeatureLayout::default(), FULL, FeatureLayout { use_type: false, use_ff: false }] {
            assert_eq!(layout.kinds().len(), layout.width());
            assert_eq!(layout.column_names().len(), layout.width());
            assert_eq!(FeatureFrame::default().to_vector(&layout).len(), layout.width());
        }
    }

    /// All-pairs scan, independent of the lane-sorted index.
    fn brute_force(target: VehicleId, scene: &[(VehicleId, u32, f64, Option<VehicleId>)]) -> [Option<VehicleId>; 9] {
        let find = |id: VehicleId| scene.iter().find(|v| v.0 == id).copied();
        let preceding = |id: Option<VehicleId>| -> Option<VehicleId> {
            let p = find(id?)?.3?;
            find(p).map(|v| v.0)
        };
        let follower = |id: Option<VehicleId>| -> Option<VehicleId> {
            let id = id?;
            let mut best: Option<(f64, VehicleId)> = None;
            for v in scene {
                if v.3 == Some(id) {
                    let better = match best {
                        None => true,
                        Some((y, bid)) => v.2 > y || (v.2 == y && v.0 < bid),
                    };
                    if better {
                        best = Some((v.2, v.0));
                    }
                }
            }
            best.map(|b| b.1)
        };
        let me = find(target).unwrap();
        let closest = |lane: i64| -> Option<VehicleId> {
            let mut best: Option<(f64, bool, VehicleId)> = None;
            for v in scene {
                if v.1 as i64 != lane {
                    continue;
                }
                let key = ((v.2 - me.2).abs(), v.2 < me.2, v.0);
                let better = match best {
                    None => true,
                    Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1, key.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(key);
                }
            }
            best.map(|b| b.2)
        };
        let l = closest(me.1 as i64 - 1);
        let r = closest(me.1 as i64 + 1);
        let f = preceding(Some(target));
        [l, r, f, follower(Some(target)), preceding(l), preceding(r), follower(l), follower(r), preceding(f)]
    }

    /// Random acyclic scene: preceding links always point to a vehicle further ahead.
    fn random_scene(rng: &mut ChaCha8Rng) -> Vec<(VehicleId, u32, f64, Option<VehicleId>)> {
        let n = rng.random_range(1..=60);
        let mut ids: Vec<VehicleId> = (1..=200).collect();
        ids.shuffle(rng);
        let mut scene: Vec<(VehicleId, u32, f64, Option<VehicleId>)> = ids[..n]
            .iter()
            .map(|&id| {
                // coarse grid so that equal gaps and equal positions actually occur
                let y = rng.random_range(0..40) as f64 * 5.0;
                (id, rng.random_range(1..=6), y, None)
            })
            .collect();
        for i in 0..n {
            let ahead: Vec<VehicleId> = scene
                .iter()
                .filter(|v| v.2 > scene[i].2 && (v.1 == scene[i].1 || rng.random_bool(0.1)))
                .map(|v| v.0)
                .collect();
            scene[i].3 = if !ahead.is_empty() && rng.random_bool(0.8) {
                Some(ahead[rng.random_range(0..ahead.len())])
            } else if rng.random_bool(0.05) {
                Some(500) // leader outside the scene
            } else {
                None
            };
        }
        scene
    }

    #[test]
    fn agrees_with_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let scene = random_scene(&mut rng);
            let tracks: Vec<SmoothedTrack> =
                scene.iter().map(|&(id, lane, y, pre)| vehicle(id, lane, 3.7 * lane as f64, y, 10.0, pre)).collect();
            let index = build_scene_index(&tracks).unwrap();
            for &(id, ..) in &scene {
                let set = find_neighbors(id, 1, &index).unwrap();
                assert_eq!(set.ids, brute_force(id, &scene));
                assert!(set.is_consistent(id, index.frame(1).unwrap()));
            }
        }
    }

    #[test]
    fn feature_dump_round_trip() {
        let tracks = vec![vehicle(1, 2, 5.0, 30.0, 30.0, Some(2)), vehicle(2, 2, 5.5, 50.0, 25.0, None)];
        let features = extract_track_features(&tracks).unwrap();
        let mut buf = Vec::new();
        write_feature_dump(&mut buf, &features).unwrap();
        let back = read_feature_dump(buf.as_slice()).unwrap();
        assert_eq!(back, features);
    }
}
