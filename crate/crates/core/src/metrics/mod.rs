//! Field-comparison metrics: MSE, soft and hard IoU on the material field,
//! SSIM, relative mass error, masked moments, RMSE and R^2, plus their
//! aggregation over fields, timesteps and samples.

pub mod formulas;
pub mod report;

use thiserror::Error;

use crate::field::FieldError;

pub use formulas::{
    build_masks, conservation_of_mass, masked_qoi, mse_metric, samplewise_stats, sigmoid, soft_iou, ssim,
    ssim_windowed, MaskPair, MaterialBounds, Moments, QoiRow, SampleStats,
};
pub use report::{
    aggregate, evaluate, summarize, Aggregate, CurvePoint, EvalOptions, FieldRow, MetricsReport, Stat, StepRow,
    FIELD_METRICS, STEP_METRICS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("inputs differ in length: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("invalid material bounds [{lb}, {ub}]")]
    InvalidBounds { lb: f64, ub: f64 },
    #[error("unknown bounds preset `{0}` (expected porous, lattice or `lb,ub`)")]
    UnknownBounds(String),
    #[error("ground-truth mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("prediction and ground truth are misaligned at sequence(s) {0:?}")]
    Misaligned(Vec<usize>),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{0}")]
    Invalid(String),
}
