//! Scaling, multi-horizon targets, windowing and vehicle-level splits.
//!
//! # Window archive layout
//!
//! A window archive starts with a UTF-8 text header, one `key = value` per line,
//! terminated by a line containing only `end`:
//!
//! ```text
//! HIGHWAY-LSTM WINDOWS
//! version = 1
//! n_features = 49
//! use_type = false
//! use_ff = true
//! horizons = 1,2,3,4,5,6,7,8,9,10
//! scaling = 10,10,10,1
//! seed = 7
//! window_length = 100
//! windows = 1234
//! end
//! ```
//!
//! `scaling` lists the distance, longitudinal velocity, TTC and lateral velocity
//! divisors. The binary body follows immediately; for each window:
//! `vehicle_id: u32 LE`, `start_frame: u32 LE`, then `window_length × n_features`
//! inputs and `window_length × 2K` targets as little-endian `f64`, row-major.

use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FrameId, VehicleId};
use crate::neighborhood::{FeatureFrame, FeatureKind, FeatureLayout};
use crate::neural::Tensor;
use crate::smoothing::SmoothedTrack;
use crate::FRAMES_PER_SECOND;

pub const WINDOW_LENGTH: usize = 100;
pub const WINDOW_STRIDE: usize = 10;
pub const ARCHIVE_VERSION: u32 = 1;
const ARCHIVE_MAGIC: &str = "HIGHWAY-LSTM WINDOWS";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot split an empty set of vehicles")]
    EmptySplit,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("window archive: {0}")]
    Archive(String),
    #[error("window archive version {found} is not supported (expected {ARCHIVE_VERSION})")]
    Version { found: u32 },
    #[error("window archive is truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSpec {
    pub distance_divisor: f64,
    pub long_velocity_divisor: f64,
    pub ttc_divisor: f64,
    pub lateral_velocity_divisor: f64,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        ScalingSpec { distance_divisor: 10.0, long_velocity_divisor: 10.0, ttc_divisor: 10.0, lateral_velocity_divisor: 1.0 }
    }
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = [self.distance_divisor, self.long_velocity_divisor, self.ttc_divisor, self.lateral_velocity_divisor];
        if all.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Ok(())
        } else {
            Err(DatasetError::Config("scaling divisors must be positive".into()))
        }
    }

    pub fn divisor(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Distance => self.distance_divisor,
            FeatureKind::LongVelocity => self.long_velocity_divisor,
            FeatureKind::LateralVelocity => self.lateral_velocity_divisor,
            FeatureKind::Ttc => self.ttc_divisor,
            FeatureKind::Class => 1.0,
        }
    }

    /// Divisor for output column `j` of an interleaved `[x, vy]` target vector.
    pub fn target_divisor(&self, j: usize) -> f64 {
        if j.is_multiple_of(2) {
            self.distance_divisor
        } else {
            self.long_velocity_divisor
        }
    }
}

pub fn scale_features(frame: &FeatureFrame, spec: &ScalingSpec, layout: &FeatureLayout) -> Vec<f64> {
    let mut v = frame.to_vector(layout);
    for (value, kind) in v.iter_mut().zip(layout.kinds()) {
        *value /= spec.divisor(kind);
    }
    v
}

pub fn unscale_features(scaled: &[f64], spec: &ScalingSpec, layout: &FeatureLayout) -> Vec<f64> {
    scaled.iter().zip(layout.kinds()).map(|(v, k)| v * spec.divisor(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSpec {
    /// Whole seconds, strictly ascending.
    pub horizons_s: Vec<u32>,
}

impl Default for HorizonSpec {
    fn default() -> Self {
        HorizonSpec { horizons_s: (1..=10).collect() }
    }
}

impl HorizonSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.horizons_s.is_empty() || self.horizons_s[0] == 0 || self.horizons_s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::Config("horizons must be positive and strictly ascending".into()));
        }
        Ok(())
    }

    pub fn frame_offsets(&self) -> Vec<usize> {
        self.horizons_s.iter().map(|&k| (k * FRAMES_PER_SECOND) as usize).collect()
    }

    /// Width of the target vector: one lateral position and one speed per horizon.
    pub fn output_size(&self) -> usize {
        2 * self.horizons_s.len()
    }
}

/// Scaled targets `[x¹, vy¹, x², vy², …]` for each frame; `None` when the largest horizon
/// runs past the end of the series.
pub fn compute_targets_from(x: &[f64], vy: &[f64], spec: &HorizonSpec, scaling: &ScalingSpec) -> Vec<Option<Vec<f64>>> {
    let offsets = spec.frame_offsets();
    let max = offsets.last().copied().unwrap_or(0);
    (0..x.len())
        .map(|t| {
            (t + max < x.len()).then(|| {
                offsets
                    .iter()
                    .flat_map(|&o| [x[t + o] / scaling.distance_divisor, vy[t + o] / scaling.long_velocity_divisor])
                    .collect()
            })
        })
        .collect()
}

pub fn compute_targets(track: &SmoothedTrack, spec: &HorizonSpec, scaling: &ScalingSpec) -> Vec<Option<Vec<f64>>> {
    compute_targets_from(&track.x, &track.vy, spec, scaling)
}

/// Back to meters and m/s.
pub fn unscale_targets(scaled: &[f64], scaling: &ScalingSpec) -> Vec<f64> {
    scaled.iter().enumerate().map(|(j, v)| v * scaling.target_divisor(j)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub vehicle_id: VehicleId,
    pub start_frame: FrameId,
    /// `length × N` scaled features.
    pub inputs: Tensor,
    /// `length × 2K` scaled targets.
    pub targets: Tensor,
}

/// Cuts `length`-frame windows every `stride` frames, keeping only windows whose
/// every row has a target.
pub fn make_windows(
    vehicle_id: VehicleId,
    frame_ids: &[FrameId],
    features: &[Vec<f64>],
    targets: &[Option<Vec<f64>>],
    length: usize,
    stride: usize,
) -> Vec<Window> {
    let n = features.len().min(targets.len()).min(frame_ids.len());
    let mut out = Vec::new();
    let mut start = 0;
    while start + length <= n {
        let rows = start..start + length;
        if targets[rows.clone()].iter().all(Option::is_some) {
            let target_rows: Vec<Vec<f64>> = targets[rows.clone()].iter().flatten().cloned().collect();
            // rows come from equal-width vectors, so stacking cannot fail
            out.push(Window {
                vehicle_id,
                start_frame: frame_ids[start],
                inputs: Tensor::from_rows(&features[rows]).expect("uniform feature width"),
                targets: Tensor::from_rows(&target_rows).expect("uniform target width"),
            });
        }
        start += stride;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_vehicle_ids: Vec<VehicleId>,
    pub validation_vehicle_ids: Vec<VehicleId>,
    pub test_vehicle_ids: Vec<VehicleId>,
    pub seed: u64,
}

/// Random vehicle-level split: `floor(ratio · n)` vehicles go to training.
pub fn split_train_test(vehicle_ids: &[VehicleId], ratio: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let mut ids: Vec<VehicleId> = vehicle_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.is_empty() {
        return Err(DatasetError::EmptySplit);
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DatasetError::Config(format!("split ratio {ratio} outside [0, 1]")));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * ids.len() as f64) + 1e-9).floor() as usize;
    let mut test = ids.split_off(n_train);
    ids.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train_vehicle_ids: ids, validation_vehicle_ids: Vec::new(), test_vehicle_ids: test, seed })
}

impl DatasetSplit {
    /// Moves `floor(fraction · |train|)` training vehicles into a validation set.
    pub fn hold_out_validation(&mut self, fraction: f64, seed: u64) {
        let mut ids = std::mem::take(&mut self.train_vehicle_ids);
        ids.append(&mut self.validation_vehicle_ids);
        ids.sort_unstable();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((fraction * ids.len() as f64) + 1e-9).floor() as usize;
        let mut train = ids.split_off(n_val);
        ids.sort_unstable();
        train.sort_unstable();
        self.validation_vehicle_ids = ids;
        self.train_vehicle_ids = train;
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "vehicle_id,set")?;
        let sets = [("train", &self.train_vehicle_ids), ("validation", &self.validation_vehicle_ids), ("test", &self.test_vehicle_ids)];
        for (name, ids) in sets {
            for id in ids {
                writeln!(out, "{id},{name}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, seed: u64) -> Result<Self, DatasetError> {
        let mut split = DatasetSplit { train_vehicle_ids: vec![], validation_vehicle_ids: vec![], test_vehicle_ids: vec![], seed };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let (id, set) = line
                .split_once(',')
                .ok_or_else(|| DatasetError::Config(format!("split line {}: expected id,set", i + 1)))?;
            let id: VehicleId = id
                .trim()
                .parse()
                .map_err(|_| DatasetError::Config(format!("split line {}: bad id", i + 1)))?;
            match set.trim() {
                "train" => split.train_vehicle_ids.push(id),
                "validation" => split.validation_vehicle_ids.push(id),
                "test" => split.test_vehicle_ids.push(id),
                other => return Err(DatasetError::Config(format!("split line {}: unknown set {other:?}", i + 1))),
            }
        }
        Ok(split)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleGroup {
    pub vehicle_ids: Vec<VehicleId>,
    /// Indices into the window list, in shuffled order.
    pub window_indices: Vec<usize>,
}

/// Shuffles the training vehicles, cuts them into groups of `group_size` (the last may be
/// smaller) and collects each group's windows in a seeded random order.
pub fn make_vehicle_groups(train_ids: &[VehicleId], windows: &[Window], group_size: usize, seed: u64) -> Vec<VehicleGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<VehicleId> = train_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut rng);
    ids.chunks(group_size.max(1))
        .map(|chunk| {
            let members: BTreeSet<VehicleId> = chunk.iter().copied().collect();
            let mut window_indices: Vec<usize> =
                windows.iter().enumerate().filter(|(_, w)| members.contains(&w.vehicle_id)).map(|(i, _)| i).collect();
            window_indices.shuffle(&mut rng);
            VehicleGroup { vehicle_ids: chunk.to_vec(), window_indices }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveHeader {
    pub n_features: usize,
    pub layout: FeatureLayout,
    pub horizons: HorizonSpec,
    pub scaling: ScalingSpec,
    pub seed: u64,
    pub window_length: usize,
}

impl ArchiveHeader {
    fn text(&self, count: usize) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let s = &self.scaling;
        format!(
            "{ARCHIVE_MAGIC}\nversion = {ARCHIVE_VERSION}\nn_features = {}\nuse_type = {}\nuse_ff = {}\nhorizons = {}\nscaling = {},{},{},{}\nseed = {}\nwindow_length = {}\nwindows = {count}\nend\n",
            self.n_features,
            self.layout.use_type,
            self.layout.use_ff,
            join(&self.horizons.horizons_s),
            s.distance_divisor,
            s.long_velocity_divisor,
            s.ttc_divisor,
            s.lateral_velocity_divisor,
            self.seed,
            self.window_length,
        )
    }
}

pub fn write_window_archive<W: Write>(mut out: W, header: &ArchiveHeader, windows: &[Window]) -> Result<(), DatasetError> {
    let k2 = header.horizons.output_size();
    out.write_all(header.text(windows.len()).as_bytes())?;
    for w in windows {
        if w.inputs.shape() != [header.window_length, header.n_features] || w.targets.shape() != [header.window_length, k2] {
            return Err(DatasetError::Archive(format!(
                "window of vehicle {} has shape {:?}/{:?}, header says {}x{}/{}x{}",
                w.vehicle_id,
                w.inputs.shape(),
                w.targets.shape(),
                header.window_length,
                header.n_features,
                header.window_length,
                k2
            )));
        }
        out.write_all(&w.vehicle_id.to_le_bytes())?;
        out.write_all(&w.start_frame.to_le_bytes())?;
        for v in w.inputs.data().iter().chain(w.targets.data()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `key = value` header lines up to `end`; returns them in order.
pub(crate) fn read_text_header<R: BufRead>(reader: &mut R, magic: &str) -> Result<Vec<(String, String)>, String> {
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| e.to_string())?;
    if line.trim_end() != magic {
        return Err(format!("bad magic line {:?}", line.trim_end()));
    }
    let mut pairs = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            return Err("header not terminated".into());
        }
        let l = line.trim_end_matches('\n');
        if l == "end" {
            return Ok(pairs);
        }
        let (k, v) = l.split_once('=').ok_or_else(|| format!("bad header line {l:?}"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
}

pub(crate) fn header_value<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str, String> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| format!("missing header key {key}"))
}

pub(crate) fn parse_header<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T, String> {
    let v = header_value(pairs, key)?;
    v.parse().map_err(|_| format!("bad value for {key}: {v:?}"))
}

pub(crate) fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse().map_err(|_| format!("bad list item {s:?}"))).collect()
}

pub(crate) fn read_f64s<R: Read>(reader: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    reader.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Reads only the header of an archive.
pub fn read_archive_header<R: BufRead>(reader: &mut R) -> Result<(ArchiveHeader, usize), DatasetError> {
    let pairs = read_text_header(reader, ARCHIVE_MAGIC).map_err(DatasetError::Archive)?;
    let version: u32 = parse_header(&pairs, "version").map_err(DatasetError::Archive)?;
    if version != ARCHIVE_VERSION {
        return Err(DatasetError::Version { found: version });
    }
    let get = |k: &str| header_value(&pairs, k).map_err(DatasetError::Archive);
    let scaling: Vec<f64> = parse_list(get("scaling")?).map_err(DatasetError::Archive)?;
    if scaling.len() != 4 {
        return Err(DatasetError::Archive("scaling needs four divisors".into()));
    }
    let header = ArchiveHeader {
        n_features: parse_header(&pairs, "n_features").map_err(DatasetError::Archive)?,
        layout: FeatureLayout {
            use_type: parse_header(&pairs, "use_type").map_err(DatasetError::Archive)?,
            use_ff: parse_header(&pairs, "use_ff").map_err(DatasetError::Archive)?,
        },
        horizons: HorizonSpec { horizons_s: parse_list(get("horizons")?).map_err(DatasetError::Archive)? },
        scaling: ScalingSpec {
            distance_divisor: scaling[0],
            long_velocity_divisor: scaling[1],
            ttc_divisor: scaling[2],
            lateral_velocity_divisor: scaling[3],
        },
        seed: parse_header(&pairs, "seed").map_err(DatasetError::Archive)?,
        window_length: parse_header(&pairs, "window_length").map_err(DatasetError::Archive)?,
    };
    if header.layout.width() != header.n_features {
        return Err(DatasetError::Archive(format!(
            "n_features {} disagrees with the layout width {}",
            header.n_features,
            header.layout.width()
        )));
    }
    header.horizons.validate()?;
    let count = parse_header(&pairs, "windows").map_err(DatasetError::Archive)?;
    Ok((header, count))
}

pub fn read_window_archive<R: BufRead>(mut reader: R) -> Result<(ArchiveHeader, Vec<Window>), DatasetError> {
    let (header, count) = read_archive_header(&mut reader)?;
    let len = header.window_length;
    let (n, k2) = (header.n_features, header.horizons.output_size());
    let truncated = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DatasetError::Truncated
        } else {
            DatasetError::Io(e)
        }
    };
    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ids = [0u8; 8];
        reader.read_exact(&mut ids).map_err(truncated)?;
        let vehicle_id = u32::from_le_bytes(ids[..4].try_into().expect("4 bytes"));
        let start_frame = u32::from_le_bytes(ids[4..].try_into().expect("4 bytes"));
        let inputs = read_f64s(&mut reader, len * n).map_err(truncated)?;
        let targets = read_f64s(&mut reader, len * k2).map_err(truncated)?;
        windows.push(Window {
            vehicle_id,
            start_frame,
            inputs: Tensor::from_vec(&[len, n], inputs).expect("sized read"),
            targets: Tensor::from_vec(&[len, k2], targets).expect("sized read"),
        });
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(DatasetError::Archive("trailing bytes after the last window".into()));
    }
    Ok((header, windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::VehicleClass;
    use crate::neighborhood::{NeighborRole, RoleFeatures, TargetFeatures};
    use proptest::prelude::*;

    fn smoothed(x: Vec<f64>, vy: Vec<f64>) -> SmoothedTrack {
        let n = x.len();
        SmoothedTrack {
            vehicle_id: 1,
            vehicle_class: VehicleClass::Car,
            frame_ids: (1..=n as u32).collect(),
            y: vec![0.0; n],
            vx: vec![0.0; n],
            x,
            vy,
            lane_ids: vec![1; n],
            preceding: vec![None; n],
            following: vec![None; n],
        }
    }

    fn sample_frame() -> FeatureFrame {
        let mut f = FeatureFrame {
            target: TargetFeatures { x: 5.5, y: 120.0, vx: 0.4, vy: 21.0, class: 1.0 },
            roles: [RoleFeatures::default(); 9],
        };
        f.roles[NeighborRole::F.index()] = RoleFeatures { vx: -0.2, dvy: 3.0, dx: 0.7, dy: 25.0, ttc: 8.0, class: -1.0 };
        f.roles[NeighborRole::FF.index()] = RoleFeatures { vx: 0.1, dvy: -1.0, dx: 1.1, dy: 60.0, ttc: -60.0, class: 0.0 };
        f
    }

    #[test]
    fn distance_divided_by_ten() {
        let v = scale_features(&sample_frame(), &ScalingSpec::default(), &FeatureLayout::default());
        // target block (4) + l, r, b blocks precede f: f starts at 4 + 2*5
        assert_eq!(v[4 + 2 * 5 + 3], 2.5);
    }

    #[test]
    fn zero_frame_scales_to_zero() {
        let v = scale_features(&FeatureFrame::default(), &ScalingSpec::default(), &FeatureLayout::default());
        assert_eq!(v, vec![0.0; 49]);
    }

    #[test]
    fn field_by_field_oracle() {
        let layout = FeatureLayout { use_type: true, use_ff: true };
        let f = sample_frame();
        let v = scale_features(&f, &ScalingSpec::default(), &layout);
        let fb = 5 + 2 * 6;
        let ffb = 5 + 8 * 6;
        let expected_target = [0.55, 12.0, 0.4, 2.1, 1.0];
        for (a, b) in v[..5].iter().zip(expected_target) {
            assert!((a - b).abs() < 1e-15);
        }
        let expected_f = [-0.2, 0.3, 0.07, 2.5, 0.8, -1.0];
        for (a, b) in v[fb..fb + 6].iter().zip(expected_f) {
            assert!((a - b).abs() < 1e-15);
        }
        let expected_ff = [0.1, -0.1, 0.11, 6.0, -6.0, 0.0];
        for (a, b) in v[ffb..ffb + 6].iter().zip(expected_ff) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(v.len(), 59);
        let no_ff = scale_features(&f, &ScalingSpec::default(), &FeatureLayout { use_type: false, use_ff: false });
        assert_eq!(no_ff.len(), 44);
    }

    #[test]
    fn constant_track_targets() {
        let track = smoothed(vec![20.0; 150], vec![15.0; 150]);
        let targets = compute_targets(&track, &HorizonSpec::default(), &ScalingSpec::default());
        let present: Vec<&Vec<f64>> = targets.iter().flatten().collect();
        assert_eq!(present.len(), 50);
        assert!(targets[..50].iter().all(Option::is_some));
        for t in present {
            assert_eq!(t.len(), 20);
            for pair in t.chunks(2) {
                assert_eq!(pair, &[2.0, 1.5]);
            }
        }
    }

    #[test]
    fn ramp_target_indexing() {
        let x: Vec<f64> = (0..200).map(|t| 0.1 * t as f64).collect();
        let track = smoothed(x, vec![0.0; 200]);
        let spec = HorizonSpec { horizons_s: vec![3] };
        let targets = compute_targets(&track, &spec, &ScalingSpec::default());
        let t0 = targets[0].as_ref().unwrap();
        assert!((t0[0] - 0.3).abs() < 1e-15);
    }

    fn rows(n: usize) -> (Vec<FrameId>, Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
        let frames = (1000..1000 + n as u32).collect();
        let features = (0..n).map(|i| vec![i as f64, 1.0]).collect();
        let targets = (0..n).map(|i| Some(vec![i as f64, 0.0])).collect();
        (frames, features, targets)
    }

    #[test]
    fn window_counts_and_overlap() {
        let (f, x, t) = rows(250);
        let windows = make_windows(4, &f, &x, &t, WINDOW_LENGTH, WINDOW_STRIDE);
        assert_eq!(windows.len(), (250 - 100) / 10 + 1);
        let starts: Vec<u32> = windows.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, (0..16).map(|i| 1000 + 10 * i).collect::<Vec<_>>());
        for pair in windows.windows(2) {
            let a: BTreeSet<u32> = (pair[0].start_frame..pair[0].start_frame + 100).collect();
            let b: BTreeSet<u32> = (pair[1].start_frame..pair[1].start_frame + 100).collect();
            assert_eq!(a.intersection(&b).count(), 90);
        }
        for w in &windows {
            assert_eq!(w.inputs.shape(), &[100, 2]);
            assert_eq!(w.inputs.row(0)[0], (w.start_frame - 1000) as f64);
        }
        let (f, x, t) = rows(99);
        assert!(make_windows(4, &f, &x, &t, WINDOW_LENGTH, WINDOW_STRIDE).is_empty());
    }

    #[test]
    fn windows_need_complete_targets() {
        let (f, x, mut t) = rows(250);
        for slot in t.iter_mut().skip(180) {
            *slot = None;
        }
        let windows = make_windows(4, &f, &x, &t, WINDOW_LENGTH, WINDOW_STRIDE);
        // the last complete window covers rows 80..180
        assert_eq!(windows.len(), 9);
        assert!(windows.iter().all(|w| w.start_frame + 100 <= 1180));
    }

    #[test]
    fn splits() {
        let ids: Vec<u32> = (1..=10).collect();
        let s = split_train_test(&ids, 0.8, 3).unwrap();
        assert_eq!((s.train_vehicle_ids.len(), s.test_vehicle_ids.len()), (8, 2));
        assert_eq!(s, split_train_test(&ids, 0.8, 3).unwrap());
        let big: Vec<u32> = (1..=6101).collect();
        let s = split_train_test(&big, 0.8, 1).unwrap();
        assert_eq!((s.train_vehicle_ids.len(), s.test_vehicle_ids.len()), (4880, 1221));
        let all: BTreeSet<u32> = s.train_vehicle_ids.iter().chain(&s.test_vehicle_ids).copied().collect();
        assert_eq!(all.len(), 6101);
        assert!(matches!(split_train_test(&[], 0.8, 1), Err(DatasetError::EmptySplit)));
    }

    #[test]
    fn validation_hold_out_and_csv() {
        let ids: Vec<u32> = (1..=100).collect();
        let mut s = split_train_test(&ids, 0.8, 3).unwrap();
        s.hold_out_validation(0.1, 9);
        assert_eq!(s.train_vehicle_ids.len(), 72);
        assert_eq!(s.validation_vehicle_ids.len(), 8);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(DatasetSplit::read_csv(buf.as_slice(), 3).unwrap(), s);
    }

    fn tiny_windows(vehicles: u32, per_vehicle: u32) -> Vec<Window> {
        (1..=vehicles)
            .flat_map(|v| {
                (0..per_vehicle).map(move |k| Window {
                    vehicle_id: v,
                    start_frame: k * 10,
                    inputs: Tensor::zeros(&[2, 1]),
                    targets: Tensor::zeros(&[2, 2]),
                })
            })
            .collect()
    }

    #[test]
    fn vehicle_groups() {
        let ids: Vec<u32> = (1..=1200).collect();
        let windows = tiny_windows(1200, 2);
        let groups = make_vehicle_groups(&ids, &windows, 500, 5);
        let sizes: Vec<usize> = groups.iter().map(|g| g.vehicle_ids.len()).collect();
        assert_eq!(sizes, vec![500, 500, 200]);
        for g in &groups {
            let mut shuffled = g.window_indices.clone();
            shuffled.sort_unstable();
            let members: BTreeSet<u32> = g.vehicle_ids.iter().copied().collect();
            let mut expected: Vec<usize> =
                windows.iter().enumerate().filter(|(_, w)| members.contains(&w.vehicle_id)).map(|(i, _)| i).collect();
            expected.sort_unstable();
            assert_eq!(shuffled, expected);
        }
        let other = make_vehicle_groups(&ids, &windows, 500, 6);
        assert_ne!(groups, other);
        let all = |gs: &[VehicleGroup]| {
            let mut v: Vec<usize> = gs.iter().flat_map(|g| g.window_indices.clone()).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(all(&groups), all(&other));
        assert_eq!(groups, make_vehicle_groups(&ids, &windows, 500, 5));
    }

    fn header() -> ArchiveHeader {
        ArchiveHeader {
            n_features: 49,
            layout: FeatureLayout::default(),
            horizons: HorizonSpec { horizons_s: vec![1, 2] },
            scaling: ScalingSpec::default(),
            seed: 7,
            window_length: 3,
        }
    }

    #[test]
    fn archive_round_trip_and_errors() {
        let h = header();
        let windows: Vec<Window> = (0..3)
            .map(|i| Window {
                vehicle_id: 10 + i,
                start_frame: 100 * i,
                inputs: Tensor::from_vec(&[3, 49], (0..147).map(|v| v as f64 * 0.25 + i as f64).collect()).unwrap(),
                targets: Tensor::from_vec(&[3, 4], (0..12).map(|v| -(v as f64)).collect()).unwrap(),
            })
            .collect();
        let mut buf = Vec::new();
        write_window_archive(&mut buf, &h, &windows).unwrap();
        let (h2, w2) = read_window_archive(buf.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(w2, windows);

        let cut = &buf[..buf.len() - 8];
        assert!(matches!(read_window_archive(cut), Err(DatasetError::Truncated)));

        let mut edited = buf.clone();
        let at = buf.windows(11).position(|w| w == b"version = 1").unwrap();
        edited[at + 10] = b'9';
        assert!(matches!(read_window_archive(edited.as_slice()), Err(DatasetError::Version { found: 9 })));
    }

    proptest! {
        #[test]
        fn unscale_inverts_scale(values in proptest::collection::vec(-500.0f64..500.0, 59)) {
            let layout = FeatureLayout { use_type: true, use_ff: true };
            let spec = ScalingSpec::default();
            let mut scaled = values.clone();
            for (v, k) in scaled.iter_mut().zip(layout.kinds()) {
                *v /= spec.divisor(k);
            }
            let back = unscale_features(&scaled, &spec, &layout);
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
