//! NGSIM-format trajectory ingestion.
//!
//! Source files are delimiter-separated text with one row per (vehicle, frame).
//! Which column holds which field is described by a [`ColumnMap`], usually loaded
//! from a small TOML file:
//!
//! ```toml
//! vehicle_id = 0
//! frame_id = 1
//! local_x = 4
//! local_y = 5
//! vehicle_class = 10
//! lane_id = 13
//! preceding_id = 14
//! following_id = 15      # optional; reconstructed from preceding_id when absent
//! delimiter = "auto"     # "auto", "comma" or "whitespace"
//! length_scale = 0.3048  # source length unit to meters
//!
//! [class_codes]
//! motorcycle = 1
//! car = 2
//! truck = 3
//! ```
//!
//! Positions are converted to meters at ingest so everything downstream is SI.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::FRAME_PERIOD;

pub type VehicleId = u32;
pub type FrameId = u32;

/// Segments shorter than this (12 s) cannot hold a 100-step window plus smoothing margins.
pub const MIN_SEGMENT_FRAMES: usize = 120;

/// Exact international foot.
pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: expected at least {expected} fields, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: column {column} ({field}): cannot parse {value:?}")]
    NotNumeric { line: usize, column: usize, field: &'static str, value: String },
    #[error("line {line}: {message}")]
    InvalidValue { line: usize, message: String },
    #[error("line {line}: unknown vehicle class code {code}")]
    UnknownClass { line: usize, code: i64 },
    #[error("vehicle {vehicle_id} has two records for frame {frame_id}")]
    DuplicateFrame { vehicle_id: VehicleId, frame_id: FrameId },
    #[error("vehicle {vehicle_id} changes class between records")]
    InconsistentClass { vehicle_id: VehicleId },
    #[error("invalid column map: {0}")]
    ColumnMap(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleClass {
    Motorcycle,
    Car,
    Truck,
}

impl VehicleClass {
    /// Feature encoding: motorcycle −1, car 0, truck +1.
    pub fn encode(self) -> f64 {
        match self {
            VehicleClass::Motorcycle => -1.0,
            VehicleClass::Car => 0.0,
            VehicleClass::Truck => 1.0,
        }
    }

    pub fn decode(value: f64) -> Option<Self> {
        match value {
            -1.0 => Some(VehicleClass::Motorcycle),
            0.0 => Some(VehicleClass::Car),
            1.0 => Some(VehicleClass::Truck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub vehicle_id: VehicleId,
    pub frame_id: FrameId,
    /// Lateral position from the leftmost road edge, meters.
    pub local_x: f64,
    /// Longitudinal position, meters.
    pub local_y: f64,
    pub lane_id: u32,
    pub vehicle_class: VehicleClass,
    pub preceding_id: Option<VehicleId>,
    pub following_id: Option<VehicleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Auto,
    Comma,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ClassCodes {
    pub motorcycle: i64,
    pub car: i64,
    pub truck: i64,
}

impl Default for ClassCodes {
    fn default() -> Self {
        ClassCodes { motorcycle: 1, car: 2, truck: 3 }
    }
}

impl ClassCodes {
    fn class_of(&self, code: i64) -> Option<VehicleClass> {
        if code == self.motorcycle {
            Some(VehicleClass::Motorcycle)
        } else if code == self.car {
            Some(VehicleClass::Car)
        } else if code == self.truck {
            Some(VehicleClass::Truck)
        } else {
            None
        }
    }

    fn code_of(&self, class: VehicleClass) -> i64 {
        match class {
            VehicleClass::Motorcycle => self.motorcycle,
            VehicleClass::Car => self.car,
            VehicleClass::Truck => self.truck,
        }
    }
}

/// Zero-based source column of each field.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub vehicle_id: usize,
    pub frame_id: usize,
    pub local_x: usize,
    pub local_y: usize,
    pub lane_id: usize,
    pub vehicle_class: usize,
    pub preceding_id: usize,
    #[serde(default)]
    pub following_id: Option<usize>,
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    #[serde(default)]
    pub class_codes: ClassCodes,
}

fn default_length_scale() -> f64 {
    FEET_TO_METERS
}

impl Default for ColumnMap {
    /// The published US-101 layout (18 columns, feet).
    fn default() -> Self {
        ColumnMap {
            vehicle_id: 0,
            frame_id: 1,
            local_x: 4,
            local_y: 5,
            vehicle_class: 10,
            lane_id: 13,
            preceding_id: 14,
            following_id: Some(15),
            delimiter: Delimiter::Auto,
            length_scale: FEET_TO_METERS,
            class_codes: ClassCodes::default(),
        }
    }
}

impl ColumnMap {
    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let map: ColumnMap = toml::from_str(text).map_err(|e| IngestError::ColumnMap(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), IngestError> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(IngestError::ColumnMap("length_scale must be positive".into()));
        }
        let c = &self.class_codes;
        if c.motorcycle == c.car || c.car == c.truck || c.motorcycle == c.truck {
            return Err(IngestError::ColumnMap("class codes must be distinct".into()));
        }
        Ok(())
    }

    fn width(&self) -> usize {
        [
            self.vehicle_id,
            self.frame_id,
            self.local_x,
            self.local_y,
            self.lane_id,
            self.vehicle_class,
            self.preceding_id,
            self.following_id.unwrap_or(0),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
            + 1
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        let comma = match self.delimiter {
            Delimiter::Comma => true,
            Delimiter::Whitespace => false,
            Delimiter::Auto => line.contains(','),
        };
        if comma {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        }
    }
}

fn field<'a>(fields: &[&'a str], column: usize) -> &'a str {
    fields[column]
}

fn parse_f64(fields: &[&str], column: usize, name: &'static str, line: usize) -> Result<f64, IngestError> {
    let raw = field(fields, column);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::NotNumeric { line, column, field: name, value: raw.to_string() })
}

fn parse_int(fields: &[&str], column: usize, name: &'static str, line: usize) -> Result<i64, IngestError> {
    let raw = field(fields, column);
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    // NGSIM exports sometimes write integers as "12.0".
    match raw.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(IngestError::NotNumeric { line, column, field: name, value: raw.to_string() }),
    }
}

fn parse_id(fields: &[&str], column: usize, name: &'static str, line: usize) -> Result<u32, IngestError> {
    let v = parse_int(fields, column, name, line)?;
    u32::try_from(v)
        .ok()
        .filter(|&id| id > 0)
        .ok_or_else(|| IngestError::InvalidValue { line, message: format!("{name} must be a positive integer, got {v}") })
}

fn parse_optional_id(fields: &[&str], column: usize, name: &'static str, line: usize) -> Result<Option<u32>, IngestError> {
    match parse_int(fields, column, name, line)? {
        0 => Ok(None),
        v => u32::try_from(v)
            .map(Some)
            .map_err(|_| IngestError::InvalidValue { line, message: format!("{name} out of range: {v}") }),
    }
}

fn parse_row(fields: &[&str], map: &ColumnMap, line: usize) -> Result<TrajectoryRecord, IngestError> {
    let vehicle_id = parse_id(fields, map.vehicle_id, "vehicle_id", line)?;
    let frame_id = parse_id(fields, map.frame_id, "frame_id", line)?;
    let local_x = parse_f64(fields, map.local_x, "local_x", line)? * map.length_scale;
    let local_y = parse_f64(fields, map.local_y, "local_y", line)? * map.length_scale;
    let lane_id = parse_id(fields, map.lane_id, "lane_id", line)?;
    let code = parse_int(fields, map.vehicle_class, "vehicle_class", line)?;
    let vehicle_class = map.class_codes.class_of(code).ok_or(IngestError::UnknownClass { line, code })?;
    let preceding_id = parse_optional_id(fields, map.preceding_id, "preceding_id", line)?;
    let following_id = match map.following_id {
        Some(column) => parse_optional_id(fields, column, "following_id", line)?,
        None => None,
    };
    if local_x < 0.0 || local_y < 0.0 {
        return Err(IngestError::InvalidValue { line, message: "negative local coordinate".into() });
    }
    if preceding_id == Some(vehicle_id) || following_id == Some(vehicle_id) {
        return Err(IngestError::InvalidValue { line, message: "vehicle references itself as neighbor".into() });
    }
    Ok(TrajectoryRecord { vehicle_id, frame_id, local_x, local_y, lane_id, vehicle_class, preceding_id, following_id })
}

/// Parses a delimiter-separated trajectory file.
///
/// Blank lines and lines starting with `#` are skipped. A first line whose vehicle id
/// column is not numeric is treated as a header. Line numbers in errors are 1-based.
/// When the map has no `following_id` column, followers are reconstructed with
/// [`fill_following_ids`].
pub fn parse_trajectory_file<R: BufRead>(reader: R, map: &ColumnMap) -> Result<Vec<TrajectoryRecord>, IngestError> {
    map.validate()?;
    let width = map.width();
    let mut records = Vec::new();
    let mut first_data_line = true;
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = map.split(trimmed);
        if first_data_line {
            first_data_line = false;
            let looks_like_header = fields
                .get(map.vehicle_id)
                .map(|f| f.parse::<f64>().is_err())
                .unwrap_or(false);
            if looks_like_header {
                continue;
            }
        }
        if fields.len() < width {
            return Err(IngestError::FieldCount { line: number, expected: width, found: fields.len() });
        }
        records.push(parse_row(&fields, map, number)?);
    }
    if map.following_id.is_none() {
        fill_following_ids(&mut records);
    }
    Ok(records)
}

/// Smallest-error preimage of `meters` under `feet * scale`, so that reparsing
/// the written value reproduces `meters` bit for bit whenever such a value exists.
fn to_source_units(meters: f64, scale: f64) -> f64 {
    let guess = meters / scale;
    if guess * scale == meters {
        return guess;
    }
    let mut down = guess;
    let mut up = guess;
    for _ in 0..8 {
        down = down.next_down();
        up = up.next_up();
        if up * scale == meters {
            return up;
        }
        if down * scale == meters {
            return down;
        }
    }
    guess
}

/// Writes a record in the source layout described by `map` (the inverse of parsing).
/// Columns not covered by the map are written as `0`.
pub fn record_to_row(record: &TrajectoryRecord, map: &ColumnMap) -> String {
    let mut fields = vec!["0".to_string(); map.width()];
    fields[map.vehicle_id] = record.vehicle_id.to_string();
    fields[map.frame_id] = record.frame_id.to_string();
    fields[map.local_x] = format!("{}", to_source_units(record.local_x, map.length_scale));
    fields[map.local_y] = format!("{}", to_source_units(record.local_y, map.length_scale));
    fields[map.lane_id] = record.lane_id.to_string();
    fields[map.vehicle_class] = map.class_codes.code_of(record.vehicle_class).to_string();
    fields[map.preceding_id] = record.preceding_id.unwrap_or(0).to_string();
    if let Some(column) = map.following_id {
        fields[column] = record.following_id.unwrap_or(0).to_string();
    }
    let sep = if map.delimiter == Delimiter::Comma { "," } else { " " };
    fields.join(sep)
}

/// Rebuilds `following_id` by inverting `preceding_id` within each frame.
///
/// When several vehicles claim the same leader (merges), the one closest behind it wins.
pub fn fill_following_ids(records: &mut [TrajectoryRecord]) {
    // (frame, leader) -> (follower y, follower id)
    let mut best: HashMap<(FrameId, VehicleId), (f64, VehicleId)> = HashMap::new();
    for r in records.iter() {
        if let Some(leader) = r.preceding_id {
            let entry = best.entry((r.frame_id, leader)).or_insert((r.local_y, r.vehicle_id));
            if (r.local_y, std::cmp::Reverse(r.vehicle_id)) > (entry.0, std::cmp::Reverse(entry.1)) {
                *entry = (r.local_y, r.vehicle_id);
            }
        }
    }
    for r in records.iter_mut() {
        r.following_id = best.get(&(r.frame_id, r.vehicle_id)).map(|&(_, id)| id);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    pub vehicle_id: VehicleId,
    pub vehicle_class: VehicleClass,
    /// Sorted by strictly increasing frame id.
    pub records: Vec<TrajectoryRecord>,
    pub frame_period: f64,
}

impl VehicleTrack {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_frame(&self) -> FrameId {
        self.records[0].frame_id
    }

    /// Splits the track wherever consecutive frame ids are not adjacent.
    pub fn split_at_gaps(&self) -> Vec<VehicleTrack> {
        let mut segments = Vec::new();
        let mut current: Vec<TrajectoryRecord> = Vec::new();
        for r in &self.records {
            if let Some(last) = current.last() {
                if r.frame_id != last.frame_id + 1 {
                    segments.push(std::mem::take(&mut current));
                }
            }
            current.push(r.clone());
        }
        if !current.is_empty() {
            segments.push(current);
        }
        segments
            .into_iter()
            .map(|records| VehicleTrack { records, ..self.shallow() })
            .collect()
    }

    fn shallow(&self) -> VehicleTrack {
        VehicleTrack {
            vehicle_id: self.vehicle_id,
            vehicle_class: self.vehicle_class,
            records: Vec::new(),
            frame_period: self.frame_period,
        }
    }
}

/// Groups records per vehicle and sorts them by frame.
pub fn build_tracks(records: Vec<TrajectoryRecord>) -> Result<BTreeMap<VehicleId, VehicleTrack>, IngestError> {
    let mut grouped: BTreeMap<VehicleId, Vec<TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.vehicle_id).or_default().push(r);
    }
    let mut tracks = BTreeMap::new();
    for (vehicle_id, mut records) in grouped {
        records.sort_by_key(|r| r.frame_id);
        if let Some(w) = records.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
            return Err(IngestError::DuplicateFrame { vehicle_id, frame_id: w[0].frame_id });
        }
        let vehicle_class = records[0].vehicle_class;
        if records.iter().any(|r| r.vehicle_class != vehicle_class) {
            return Err(IngestError::InconsistentClass { vehicle_id });
        }
        tracks.insert(vehicle_id, VehicleTrack { vehicle_id, vehicle_class, records, frame_period: FRAME_PERIOD });
    }
    Ok(tracks)
}

/// Splits every track at frame gaps and keeps the segments of at least `min_frames` frames.
pub fn segment_tracks<'a, I>(tracks: I, min_frames: usize) -> Vec<VehicleTrack>
where
    I: IntoIterator<Item = &'a VehicleTrack>,
{
    tracks
        .into_iter()
        .flat_map(VehicleTrack::split_at_gaps)
        .filter(|s| s.len() >= min_frames)
        .collect()
}

pub const TRACK_DUMP_HEADER: &str = "vehicle_id,frame_id,local_x_m,local_y_m,lane_id,class,preceding_id,following_id";

/// Normalized track dump: SI units, class as its −1/0/+1 encoding, absent ids as 0.
pub fn write_track_dump<'a, W, I>(mut out: W, records: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a TrajectoryRecord>,
{
    writeln!(out, "{TRACK_DUMP_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.vehicle_id,
            r.frame_id,
            r.local_x,
            r.local_y,
            r.lane_id,
            r.vehicle_class.encode(),
            r.preceding_id.unwrap_or(0),
            r.following_id.unwrap_or(0)
        )?;
    }
    Ok(())
}

pub fn read_track_dump<R: BufRead>(reader: R) -> Result<Vec<TrajectoryRecord>, IngestError> {
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        if index == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(IngestError::FieldCount { line: number, expected: 8, found: fields.len() });
        }
        let class_value = parse_f64(&fields, 5, "class", number)?;
        let vehicle_class = VehicleClass::decode(class_value)
            .ok_or(IngestError::UnknownClass { line: number, code: class_value as i64 })?;
        records.push(TrajectoryRecord {
            vehicle_id: parse_id(&fields, 0, "vehicle_id", number)?,
            frame_id: parse_id(&fields, 1, "frame_id", number)?,
            local_x: parse_f64(&fields, 2, "local_x_m", number)?,
            local_y: parse_f64(&fields, 3, "local_y_m", number)?,
            lane_id: parse_id(&fields, 4, "lane_id", number)?,
            vehicle_class,
            preceding_id: parse_optional_id(&fields, 6, "preceding_id", number)?,
            following_id: parse_optional_id(&fields, 7, "following_id", number)?,
        });
    }
    Ok(records)
}
