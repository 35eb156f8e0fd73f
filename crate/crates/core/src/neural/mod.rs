//! Sequence network built from scratch: LSTM layers, time-distributed dense layers,
//! an optional input bypass, backpropagation through time and Adam.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod lstm;
mod model;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CheckpointMeta,
    CHECKPOINT_VERSION,
};
pub use dense::{Activation, DenseParams};
pub use gradcheck::{compare_gradient, gradient_check, relative_error, GradCheckReport};
pub use lstm::{lstm_step, Gate, LstmParams, LstmState};
pub use model::{init_params, model_backward, model_forward, mse, BypassMode, DenseSpec, ModelConfig, ModelParams, Variant};
pub use tensor::{dot, ShapeError, Tensor};
