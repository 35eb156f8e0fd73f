//! Highway trajectory prediction with a recurrent network written from scratch.
//!
//! The crate covers the whole chain from raw NGSIM-style trajectory files to
//! per-horizon error reports:
//!
//! * [`ingest`] parses delimiter-separated trajectory files into per-vehicle tracks (SI units).
//! * [`smoothing`] applies a first-order Savitzky-Golay filter to positions and estimates velocities.
//! * [`neighborhood`] finds the nine surrounding vehicles of interest and builds per-frame features.
//! * [`dataset`] scales features, builds multi-horizon targets, cuts 100-step windows and splits vehicles.
//! * [`neural`] holds the LSTM network: forward pass, backpropagation through time, Adam, checkpoints.
//! * [`training`] runs the grouped training schedule.
//! * [`evaluation`] predicts whole trajectories, computes RMSE per horizon and bags ensembles.
//! * [`pipeline`] chains the stages on disk; it backs the `highway-lstm` binary.
//!
//! A small synthetic traffic generator ([`synthetic`]) produces NGSIM-format files so the
//! whole chain can run without the real dataset.

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod ingest;
pub mod neighborhood;
pub mod neural;
pub mod pipeline;
pub mod smoothing;
pub mod synthetic;
pub mod training;

/// NGSIM sampling period in seconds (10 Hz).
pub const FRAME_PERIOD: f64 = 0.1;

/// Frames per second of the source data.
pub const FRAMES_PER_SECOND: u32 = 10;
