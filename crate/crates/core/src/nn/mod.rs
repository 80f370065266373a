//! Convolutional-recurrent next-frame model: two conv/ReLU/max-pool blocks
//! per input frame, a stacked LSTM over the window and a dense projection
//! back to a full frame. Gradients are derived by hand.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod params;
pub mod scalar;

use thiserror::Error;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use model::{
    accumulate_gradients, backward, conv_block, forward, forward_batch, loss_and_gradient, lstm_forward, mse_loss,
    Activations,
};
pub use params::{init_params, param_count, LayerCount, ModelConfig, ModelParams, ParamCount, Tensor};
pub use scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}
