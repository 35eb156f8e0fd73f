//! Grouped training schedule: a few epochs on each group of vehicles, repeated for
//! several full passes over the training set.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{VehicleGroup, Window};
use crate::ingest::VehicleId;
use crate::neural::{
    adam_update, model_backward, save_checkpoint, AdamConfig, AdamState, CheckpointMeta, ModelParams, ShapeError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the training set is empty")]
    EmptyTrainingSet,
    #[error("windows have {found} features but the model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at step {step}{}", .checkpoint.as_ref().map(|p| format!(" (state saved to {})", p.display())).unwrap_or_default())]
    Divergent { step: u64, checkpoint: Option<PathBuf> },
    #[error("vehicle {0} belongs to the test split but reached the training set")]
    TestLeak(VehicleId),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("writing checkpoint: {0}")]
    Checkpoint(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    /// Vehicles per group.
    pub group_size: usize,
    pub epochs_per_group: usize,
    /// Sweeps over all groups.
    pub full_passes: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            group_size: 500,
            epochs_per_group: 5,
            full_passes: 20,
            minibatch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn effective_epochs(&self) -> usize {
        self.epochs_per_group * self.full_passes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupEpoch {
    pub pass: usize,
    pub group: usize,
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mini-batch loss of every update, in step order.
    pub step_losses: Vec<f64>,
    pub group_epochs: Vec<GroupEpoch>,
    /// (step, seconds since start) at the end of every full pass. Not written to artifacts.
    pub pass_times: Vec<(u64, f64)>,
}

impl TrainHistory {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,loss")?;
        for (i, loss) in self.step_losses.iter().enumerate() {
            writeln!(out, "{},{loss:e}", i + 1)?;
        }
        out.flush()
    }
}

/// Where and under which name checkpoints go; `None` disables them.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPlan {
    pub directory: Option<PathBuf>,
    pub name: String,
}

impl CheckpointPlan {
    fn path(&self, suffix: &str) -> Option<PathBuf> {
        self.directory.as_ref().map(|d| d.join(format!("{}-{suffix}.ckpt", self.name)))
    }
}

/// Mean loss and mean gradient over a mini-batch. Per-window gradients may be
/// computed in parallel but are summed in window order.
pub fn batch_gradient(params: &ModelParams, batch: &[&Window]) -> Result<(ModelParams, f64), ShapeError> {
    let parts: Vec<(ModelParams, f64)> =
        batch.par_iter().map(|w| model_backward(params, &w.inputs, &w.targets)).collect::<Result<_, _>>()?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (g, l) in &parts {
        total.add_scaled(g, 1.0);
        loss += l;
    }
    let n = batch.len().max(1) as f64;
    let mut mean = params.zeros_like();
    mean.add_scaled(&total, 1.0 / n);
    Ok((mean, loss / n))
}

/// Fails if any window used by the groups belongs to a test vehicle.
pub fn audit_split(windows: &[Window], groups: &[VehicleGroup], test_ids: &[VehicleId]) -> Result<(), TrainError> {
    let test: BTreeSet<VehicleId> = test_ids.iter().copied().collect();
    for group in groups {
        for &i in &group.window_indices {
            if test.contains(&windows[i].vehicle_id) {
                return Err(TrainError::TestLeak(windows[i].vehicle_id));
            }
        }
        if let Some(&v) = group.vehicle_ids.iter().find(|v| test.contains(v)) {
            return Err(TrainError::TestLeak(v));
        }
    }
    Ok(())
}

/// Trains `params` in place following `schedule`. Groups are visited in order;
/// within a group the windows are reshuffled every epoch and cut into mini-batches.
pub fn train(
    params: &mut ModelParams,
    windows: &[Window],
    groups: &[VehicleGroup],
    schedule: &TrainSchedule,
    checkpoints: &CheckpointPlan,
) -> Result<TrainHistory, TrainError> {
    if groups.iter().all(|g| g.window_indices.is_empty()) {
        return Err(TrainError::EmptyTrainingSet);
    }
    let expected = params.config.input_size;
    if let Some(w) = windows.iter().find(|w| w.inputs.cols() != expected) {
        return Err(TrainError::WidthMismatch { expected, found: w.inputs.cols() });
    }
    let adam = AdamConfig { learning_rate: schedule.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut history = TrainHistory::default();
    let started = Instant::now();
    let batch_size = schedule.minibatch_size.max(1);
    for pass in 0..schedule.full_passes {
        for (g, group) in groups.iter().enumerate() {
            let mut order = group.window_indices.clone();
            for epoch in 0..schedule.epochs_per_group {
                order.shuffle(&mut rng);
                let mut epoch_loss = 0.0;
                let mut batches = 0;
                for chunk in order.chunks(batch_size) {
                    let batch: Vec<&Window> = chunk.iter().map(|&i| &windows[i]).collect();
                    let (grads, loss) = batch_gradient(params, &batch)?;
                    if !loss.is_finite() || !grads.all_finite() {
                        let step = state.step + 1;
                        let path = checkpoints.path("diverged");
                        if let Some(p) = &path {
                            save_checkpoint(p, params, CheckpointMeta { seed: schedule.seed, step: state.step })?;
                        }
                        return Err(TrainError::Divergent { step, checkpoint: path });
                    }
                    adam_update(params, &grads, &mut state, &adam);
                    history.step_losses.push(loss);
                    epoch_loss += loss;
                    batches += 1;
                }
                history.group_epochs.push(GroupEpoch {
                    pass,
                    group: g,
                    epoch,
                    mean_loss: if batches > 0 { epoch_loss / batches as f64 } else { f64::NAN },
                });
            }
        }
        history.pass_times.push((state.step, started.elapsed().as_secs_f64()));
        if let Some(p) = checkpoints.path(&format!("pass{}", pass + 1)) {
            save_checkpoint(&p, params, CheckpointMeta { seed: schedule.seed, step: state.step })?;
        }
    }
    Ok(history)
}
