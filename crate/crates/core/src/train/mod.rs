//! Teacher-forced training and autoregressive rollout.

pub mod config;
pub mod rollout;
pub mod trainer;

use thiserror::Error;

use crate::field::FieldError;
use crate::nn::{Checkpoint, CheckpointError, NnError};

pub use config::{TrainConfig, TrainPreset};
pub use rollout::{evaluate_rollouts, rollout, rollout_with, Rollout, RolloutPair, RolloutStop};
pub use trainer::{
    assemble, batch_gradient, enumerate_windows, epoch_batches, teacher_forced_loss, train, EpochRecord, TrainOptions,
    TrainOutcome, TrainReport, WindowRef,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("normalization statistics differ from the ones the checkpoint was trained with")]
    StatsMismatch,
    #[error("non-finite {what} in epoch {epoch}; last good checkpoint is from epoch {}", last_good.epoch)]
    NonFiniteLoss {
        epoch: usize,
        what: &'static str,
        last_good: Box<Checkpoint>,
    },
}
