//! First-order Savitzky-Golay smoothing and differentiation.
//!
//! Every output point is taken from the least-squares line fitted to the samples in a
//! window centred on it. Near the ends the window is clipped to the available samples,
//! so the output has the same length as the input and lines are reproduced exactly
//! everywhere.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FrameId, VehicleClass, VehicleId, VehicleTrack};
use crate::FRAME_PERIOD;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothingError {
    #[error("series of length {len} is shorter than the filter window ({window})")]
    TooShort { len: usize, window: usize },
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub window_length: usize,
    pub polynomial_order: usize,
    /// Seconds between samples.
    pub sample_period: f64,
    /// Drop the half-window of frames at each end of a smoothed track.
    pub trim_edges: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { window_length: 11, polynomial_order: 1, sample_period: FRAME_PERIOD, trim_edges: false }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), SmoothingError> {
        if self.window_length < 3 || self.window_length.is_multiple_of(2) {
            return Err(SmoothingError::InvalidSpec(format!(
                "window_length must be odd and at least 3, got {}",
                self.window_length
            )));
        }
        if self.polynomial_order != 1 {
            return Err(SmoothingError::InvalidSpec(format!(
                "only first-order filters are supported, got order {}",
                self.polynomial_order
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(SmoothingError::InvalidSpec("sample_period must be positive".into()));
        }
        Ok(())
    }

    fn half_width(&self) -> usize {
        self.window_length / 2
    }
}

/// Intercept at the centre sample and slope per sample of the least-squares line
/// through `series[lo..=hi]`, with abscissa measured from `center`.
fn line_fit(series: &[f64], lo: usize, hi: usize, center: usize) -> (f64, f64) {
    let count = (hi - lo + 1) as f64;
    let mean_u = (lo..=hi).map(|j| j as f64 - center as f64).sum::<f64>() / count;
    let mean_s = series[lo..=hi].iter().sum::<f64>() / count;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for j in lo..=hi {
        let du = j as f64 - center as f64 - mean_u;
        sxy += du * (series[j] - mean_s);
        sxx += du * du;
    }
    let slope = sxy / sxx;
    (mean_s - slope * mean_u, slope)
}

fn filter_with<F>(series: &[f64], spec: &FilterSpec, pick: F) -> Result<Vec<f64>, SmoothingError>
where
    F: Fn(f64, f64) -> f64,
{
    spec.validate()?;
    let n = series.len();
    if n < spec.window_length {
        return Err(SmoothingError::TooShort { len: n, window: spec.window_length });
    }
    let h = spec.half_width();
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(h);
            let hi = (t + h).min(n - 1);
            let (value, slope) = line_fit(series, lo, hi, t);
            pick(value, slope)
        })
        .collect())
}

/// Smoothed values; same length as the input.
pub fn savgol_smooth(series: &[f64], spec: &FilterSpec) -> Result<Vec<f64>, SmoothingError> {
    filter_with(series, spec, |value, _| value)
}

/// First derivative per second; same length as the input.
pub fn savgol_derivative(series: &[f64], spec: &FilterSpec) -> Result<Vec<f64>, SmoothingError> {
    let period = spec.sample_period;
    filter_with(series, spec, |_, slope| slope / period)
}

/// A vehicle track after smoothing. All per-frame vectors are aligned with `frame_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrack {
    pub vehicle_id: VehicleId,
    pub vehicle_class: VehicleClass,
    pub frame_ids: Vec<FrameId>,
    /// Lateral position, m.
    pub x: Vec<f64>,
    /// Longitudinal position, m.
    pub y: Vec<f64>,
    /// Lateral velocity, m/s.
    pub vx: Vec<f64>,
    /// Longitudinal velocity, m/s.
    pub vy: Vec<f64>,
    pub lane_ids: Vec<u32>,
    pub preceding: Vec<Option<VehicleId>>,
    pub following: Vec<Option<VehicleId>>,
}

impl SmoothedTrack {
    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    /// Position of `frame` in this track, if covered (tracks are gap-free).
    pub fn index_of(&self, frame: FrameId) -> Option<usize> {
        let first = *self.frame_ids.first()?;
        let idx = frame.checked_sub(first)? as usize;
        (idx < self.len() && self.frame_ids[idx] == frame).then_some(idx)
    }
}

/// Smooths positions and differentiates raw positions into velocities.
pub fn smooth_track(track: &VehicleTrack, spec: &FilterSpec) -> Result<SmoothedTrack, SmoothingError> {
    let raw_x: Vec<f64> = track.records.iter().map(|r| r.local_x).collect();
    let raw_y: Vec<f64> = track.records.iter().map(|r| r.local_y).collect();
    let mut out = SmoothedTrack {
        vehicle_id: track.vehicle_id,
        vehicle_class: track.vehicle_class,
        frame_ids: track.records.iter().map(|r| r.frame_id).collect(),
        x: savgol_smooth(&raw_x, spec)?,
        y: savgol_smooth(&raw_y, spec)?,
        vx: savgol_derivative(&raw_x, spec)?,
        vy: savgol_derivative(&raw_y, spec)?,
        lane_ids: track.records.iter().map(|r| r.lane_id).collect(),
        preceding: track.records.iter().map(|r| r.preceding_id).collect(),
        following: track.records.iter().map(|r| r.following_id).collect(),
    };
    if spec.trim_edges {
        let h = spec.half_width();
        let keep = h..out.len().saturating_sub(h).max(h);
        out.frame_ids = out.frame_ids[keep.clone()].to_vec();
        out.x = out.x[keep.clone()].to_vec();
        out.y = out.y[keep.clone()].to_vec();
        out.vx = out.vx[keep.clone()].to_vec();
        out.vy = out.vy[keep.clone()].to_vec();
        out.lane_ids = out.lane_ids[keep.clone()].to_vec();
        out.preceding = out.preceding[keep.clone()].to_vec();
        out.following = out.following[keep].to_vec();
    }
    Ok(out)
}

/// Raw vs smoothed series, one row per frame, for plotting.
pub fn write_smoothing_dump<W: Write>(mut out: W, frames: &[FrameId], raw: &[f64], smoothed: &[f64]) -> std::io::Result<()> {
    writeln!(out, "frame,raw,smoothed")?;
    for ((f, r), s) in frames.iter().zip(raw).zip(smoothed) {
        writeln!(out, "{f},{r},{s}")?;
    }
    Ok(())
}
