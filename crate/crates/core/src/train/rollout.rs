//! Sliding-window autoregressive inference.

use std::collections::VecDeque;

use rayon::prelude::*;

use super::TrainError;
use crate::field::{denormalize, normalize, FieldFrame, NormStats, Sequence};
use crate::nn::{forward, ModelParams, NnError};

/// Why a rollout stopped before `n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStop {
    /// 0-based index of the prediction that failed.
    pub step: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub frames: Vec<FieldFrame>,
    pub stopped: Option<RolloutStop>,
}

/// Rolls out `n_steps` predictions from `seeds` (normalized, exactly one
/// window long). Before step `k` the observer sees the window the model is
/// about to read; afterwards the oldest frame is dropped and the prediction
/// appended.
pub fn rollout_with(
    params: &ModelParams<f32>,
    seeds: &[FieldFrame],
    n_steps: usize,
    mut observe: impl FnMut(usize, &[FieldFrame]),
) -> Result<Rollout, NnError> {
    let window = params.config.window;
    if seeds.len() != window {
        return Err(NnError::Shape {
            expected: window,
            found: seeds.len(),
        });
    }
    let mut queue: VecDeque<FieldFrame> = seeds.iter().cloned().collect();
    let mut frames = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let current = queue.make_contiguous();
        observe(step, current);
        let next = match forward(params, current) {
            Ok(f) if f.is_finite() => f,
            Ok(_) => {
                return Ok(Rollout {
                    frames,
                    stopped: Some(RolloutStop {
                        step,
                        reason: "prediction contains non-finite values".into(),
                    }),
                })
            }
            Err(NnError::NonFinite(what)) => {
                return Ok(Rollout {
                    frames,
                    stopped: Some(RolloutStop {
                        step,
                        reason: format!("non-finite {what}"),
                    }),
                })
            }
            Err(e) => return Err(e),
        };
        queue.pop_front();
        queue.push_back(next.clone());
        frames.push(next);
    }
    Ok(Rollout { frames, stopped: None })
}

pub fn rollout(params: &ModelParams<f32>, seeds: &[FieldFrame], n_steps: usize) -> Result<Rollout, NnError> {
    rollout_with(params, seeds, n_steps, |_, _| {})
}

/// Ground truth and its rollout, both in physical units. The first
/// `window` frames of `prediction` are the ground-truth seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutPair {
    pub truth: Sequence,
    pub prediction: Sequence,
    pub stopped: Option<RolloutStop>,
}

impl RolloutPair {
    /// Number of model-generated frames.
    pub fn predicted_len(&self, window: usize) -> usize {
        self.prediction.len().saturating_sub(window)
    }
}

fn rollout_sequence(params: &ModelParams<f32>, stats: &NormStats, truth: &Sequence) -> Result<RolloutPair, TrainError> {
    let window = params.config.window;
    if truth.len() < window + 1 {
        return Err(TrainError::InvalidConfig(format!(
            "sequence of {} frames is too short for a window of {window}",
            truth.len()
        )));
    }
    let seeds = truth.frames[..window]
        .iter()
        .map(|f| normalize(f, stats))
        .collect::<Result<Vec<_>, _>>()?;
    let out = rollout(params, &seeds, truth.len() - window)?;
    let mut frames = truth.frames[..window].to_vec();
    for f in &out.frames {
        frames.push(denormalize(f, stats)?);
    }
    let prediction = Sequence::new(frames, truth.params.clone(), truth.frame_interval)?;
    Ok(RolloutPair {
        truth: truth.clone(),
        prediction,
        stopped: out.stopped,
    })
}

/// Seeds each sequence with its first `window` true frames and predicts the
/// rest. Sequences are processed on `threads` workers; the output order
/// follows the input order.
pub fn evaluate_rollouts(
    params: &ModelParams<f32>,
    stats: &NormStats,
    test_sequences: &[Sequence],
    threads: usize,
) -> Result<Vec<RolloutPair>, TrainError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| TrainError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        test_sequences
            .par_iter()
            .map(|s| rollout_sequence(params, stats, s))
            .collect()
    })
}
