//! Teacher-forced training over all `(sequence, offset)` windows of the
//! training split.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::TrainError;
use crate::field::{compute_norm_stats, normalize_sequence, DatasetSplit, NormStats, Sequence};
use crate::nn::{
    accumulate_gradients, forward_batch, init_params, mse_loss, write_checkpoint, AdamState, Checkpoint, ModelConfig,
    ModelParams, NnError,
};

/// One row per completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split is empty.
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// File name of the last checkpoint written, if any.
    pub final_checkpoint: Option<String>,
}

impl TrainReport {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_losses(&self) -> Vec<Option<f64>> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    /// `epoch,train_loss,val_loss,seconds`; losses use round-trip formatting.
    /// `with_time = false` writes 0 for the wall-clock column.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
            let secs = if with_time { e.seconds } else { 0.0 };
            out.push_str(&format!("{},{:e},{},{:.3}\n", e.epoch, e.train_loss, val, secs));
        }
        out
    }
}

/// Where checkpoints go and where training starts from.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this checkpoint; its epoch counter and optimizer state
    /// carry over and training runs up to `cfg.epochs` in total.
    pub resume: Option<Checkpoint>,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub optimizer: AdamState<f32>,
    pub stats: NormStats,
    pub report: TrainReport,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            stats_hash: self.stats.hash(),
            epoch: self.report.epochs.last().map_or(0, |e| e.epoch as u32),
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

/// Teacher-forced sample: `window` consecutive frames of sequence `seq`
/// starting at `offset`, target the frame after them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowRef {
    pub seq: usize,
    pub offset: usize,
}

/// Every window of every sequence, in (sequence, offset) order.
pub fn enumerate_windows(sequences: &[Sequence], window: usize) -> Vec<WindowRef> {
    sequences
        .iter()
        .enumerate()
        .flat_map(|(seq, s)| (0..s.len().saturating_sub(window)).map(move |offset| WindowRef { seq, offset }))
        .collect()
}

/// Epoch order: a seeded global shuffle, with the last partial batch padded
/// by wrapping around to the start of the shuffled list.
pub fn epoch_batches(n_windows: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    if n_windows == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n_windows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);
    let n_batches = n_windows.div_ceil(batch_size);
    (0..n_batches)
        .map(|b| (0..batch_size).map(|i| order[(b * batch_size + i) % n_windows]).collect())
        .collect()
}

/// Packs windows into `(B, T, F*H*W)` inputs and `(B, F*H*W)` targets.
pub fn assemble(sequences: &[Sequence], refs: &[WindowRef], window: usize) -> (Vec<f32>, Vec<f32>) {
    let frame = sequences.first().map_or(0, |s| s.shape().len());
    let mut inputs = Vec::with_capacity(refs.len() * window * frame);
    let mut targets = Vec::with_capacity(refs.len() * frame);
    for r in refs {
        let frames = &sequences[r.seq].frames;
        for f in &frames[r.offset..r.offset + window] {
            inputs.extend_from_slice(f.data());
        }
        targets.extend_from_slice(frames[r.offset + window].data());
    }
    (inputs, targets)
}

/// Batch-mean loss and gradient, computed in shards of `micro` samples.
/// Each shard writes its own buffer and the buffers are summed in shard
/// order, so the result does not depend on the number of threads.
pub fn batch_gradient(
    params: &ModelParams<f32>,
    sequences: &[Sequence],
    refs: &[WindowRef],
    micro: usize,
    pool: &rayon::ThreadPool,
) -> Result<(f64, ModelParams<f32>), NnError> {
    let window = params.config.window;
    let total = refs.len() as f64;
    let shards: Vec<&[WindowRef]> = refs.chunks(micro).collect();
    let wave = pool.current_num_threads().max(1);
    let mut loss = 0.0;
    let mut grads: Option<ModelParams<f32>> = None;
    for group in shards.chunks(wave) {
        let results: Vec<Result<(f64, ModelParams<f32>), NnError>> = pool.install(|| {
            group
                .par_iter()
                .map(|shard| {
                    let (inputs, targets) = assemble(sequences, shard, window);
                    let acts = forward_batch(params, &inputs, shard.len())?;
                    let shard_loss = mse_loss(&acts.output, &targets)?;
                    let weight = shard.len() as f64 / total;
                    let mut g = params.zeros_like();
                    accumulate_gradients(params, &inputs, &targets, &acts, weight as f32, &mut g)?;
                    Ok((shard_loss * weight, g))
                })
                .collect()
        });
        for r in results {
            let (l, g) = r?;
            loss += l;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
    }
    Ok((loss, grads.unwrap_or_else(|| params.zeros_like())))
}

/// Teacher-forced mean MSE over `refs` without gradients.
pub fn teacher_forced_loss(
    params: &ModelParams<f32>,
    sequences: &[Sequence],
    refs: &[WindowRef],
    micro: usize,
) -> Result<f64, NnError> {
    let window = params.config.window;
    let mut sum = 0.0;
    for shard in refs.chunks(micro.max(1)) {
        let (inputs, targets) = assemble(sequences, shard, window);
        let acts = forward_batch(params, &inputs, shard.len())?;
        sum += mse_loss(&acts.output, &targets)? * shard.len() as f64;
    }
    Ok(sum / refs.len().max(1) as f64)
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:05}.mstw")
}

fn save(dir: &Path, ckpt: &Checkpoint) -> Result<String, TrainError> {
    std::fs::create_dir_all(dir).map_err(crate::nn::CheckpointError::from)?;
    let name = checkpoint_name(ckpt.epoch as usize);
    write_checkpoint(dir.join(&name), ckpt)?;
    Ok(name)
}

fn model_matches_data(model: &ModelConfig, seq: &Sequence, window: usize) -> Result<(), TrainError> {
    let s = seq.shape();
    if (s.fields, s.height, s.width) != (model.fields, model.height, model.width) {
        return Err(TrainError::InvalidConfig(format!(
            "model expects frames of {}x{}x{}, data has {s}",
            model.fields, model.height, model.width
        )));
    }
    if model.window != window {
        return Err(TrainError::InvalidConfig(format!(
            "model window {} differs from training window {window}",
            model.window
        )));
    }
    Ok(())
}

/// Trains on `split.train`, validating on `split.val` after every epoch.
///
/// Normalization statistics come from the training split only and every
/// sequence is normalized with them. A non-finite loss stops training with
/// [`TrainError::NonFiniteLoss`], which carries the last good checkpoint.
pub fn train(
    sequences: &[Sequence],
    split: &DatasetSplit,
    model: &ModelConfig,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate().map_err(TrainError::InvalidConfig)?;
    model.validate()?;
    let pick = |idx: &[usize]| -> Result<Vec<Sequence>, TrainError> {
        idx.iter()
            .map(|&i| {
                sequences
                    .get(i)
                    .cloned()
                    .ok_or_else(|| TrainError::InvalidConfig(format!("split index {i} out of range")))
            })
            .collect()
    };
    let raw_train = pick(&split.train)?;
    let raw_val = pick(&split.val)?;
    let stats = compute_norm_stats(&raw_train)?;
    let norm = |seqs: Vec<Sequence>| -> Result<Vec<Sequence>, TrainError> {
        seqs.iter()
            .map(|s| {
                model_matches_data(model, s, cfg.window)?;
                Ok(normalize_sequence(s, &stats)?)
            })
            .collect()
    };
    let train_set = norm(raw_train)?;
    let val_set = norm(raw_val)?;
    let train_refs = enumerate_windows(&train_set, cfg.window);
    let val_refs = enumerate_windows(&val_set, cfg.window);
    if train_refs.is_empty() {
        return Err(TrainError::InvalidConfig(format!(
            "training split has no windows of {} + 1 frames",
            cfg.window
        )));
    }

    let (mut params, mut optimizer, start_epoch) = match &opts.resume {
        Some(ckpt) => {
            if ckpt.params.config != *model {
                return Err(TrainError::InvalidConfig("checkpoint model differs from the requested model".into()));
            }
            if ckpt.stats_hash != stats.hash() {
                return Err(TrainError::StatsMismatch);
            }
            let opt = ckpt.optimizer.clone().unwrap_or_else(|| AdamState::new(&ckpt.params));
            (ckpt.params.clone(), opt, ckpt.epoch as usize)
        }
        None => {
            let p = init_params::<f32>(model, cfg.seed)?;
            let o = AdamState::new(&p);
            (p, o, 0)
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| TrainError::InvalidConfig(format!("thread pool: {e}")))?;
    let mut report = TrainReport::default();
    let mut last_good = Checkpoint {
        params: params.clone(),
        stats_hash: stats.hash(),
        epoch: start_epoch as u32,
        optimizer: Some(optimizer.clone()),
    };
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in start_epoch + 1..=cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let batches = epoch_batches(train_refs.len(), cfg.batch_size, cfg.seed, epoch);
        let n_batches = batches.len();
        for batch in batches {
            let refs: Vec<WindowRef> = batch.iter().map(|&i| train_refs[i]).collect();
            let step = batch_gradient(&params, &train_set, &refs, cfg.micro_batch, &pool)
                .and_then(|(loss, grads)| {
                    if !loss.is_finite() {
                        return Err(NnError::NonFinite("loss"));
                    }
                    optimizer.update(&mut params, &grads, &cfg.adam)?;
                    Ok(loss)
                });
            match step {
                Ok(loss) => loss_sum += loss,
                Err(NnError::NonFinite(what)) => {
                    if let Some(dir) = &opts.checkpoint_dir {
                        save(dir, &last_good)?;
                    }
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        what,
                        last_good: Box::new(last_good),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_loss = if val_refs.is_empty() {
            None
        } else {
            Some(teacher_forced_loss(&params, &val_set, &val_refs, cfg.micro_batch)?)
        };
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            if let Some(dir) = &opts.checkpoint_dir {
                save(dir, &last_good)?;
            }
            return Err(TrainError::NonFiniteLoss {
                epoch,
                what: "loss",
                last_good: Box::new(last_good),
            });
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
        if opts.verbose {
            let val = val_loss.map_or_else(|| "-".to_owned(), |v| format!("{v:.3e}"));
            eprintln!("epoch {epoch:>5}  train {train_loss:.3e}  val {val}");
        }
        last_good = Checkpoint {
            params: params.clone(),
            stats_hash: stats.hash(),
            epoch: epoch as u32,
            optimizer: Some(optimizer.clone()),
        };

        let mut stop = false;
        if let (Some(patience), Some(v)) = (cfg.patience, val_loss) {
            if v < best_val {
                best_val = v;
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= patience;
            }
        }
        let periodic = cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0;
        if let Some(dir) = &opts.checkpoint_dir {
            if periodic || stop || epoch == cfg.epochs {
                report.final_checkpoint = Some(save(dir, &last_good)?);
            }
        }
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        optimizer,
        stats,
        report,
    })
}
