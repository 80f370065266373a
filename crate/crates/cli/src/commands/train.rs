use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use mstm_core::field::{read_container, read_norm_stats, split_dataset, write_norm_stats};
use mstm_core::nn::{read_checkpoint, write_checkpoint, ModelConfig};
use mstm_core::train::{train, TrainConfig, TrainError, TrainOptions};

use crate::io::{ensure_dir, load_config, output_path, write_atomic};
use crate::manifest::Recorder;
use crate::Global;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset container.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, statistics and the loss report.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// `model = full` selects the large network; anything else in the config
/// (`conv1_out`, `lstm_hidden`, ...) adjusts the chosen base.
fn model_config(kv: &mut mstm_core::config::KeyValues, height: usize, width: usize, window: usize) -> Result<ModelConfig> {
    let base = match kv.take::<String>("model")?.as_deref() {
        None | Some("reduced") => ModelConfig::reduced(height, width),
        Some("full") => ModelConfig {
            height,
            width,
            ..ModelConfig::default()
        },
        Some(other) => bail!("unknown model `{other}` (full, reduced)"),
    };
    let base = ModelConfig { window, ..base };
    let model = ModelConfig::from_key_values(kv, base)?;
    model.validate()?;
    Ok(model)
}

pub fn run(global: &Global, args: &TrainArgs) -> Result<()> {
    let (mut kv, config_hash) = load_config(global)?;
    let mut cfg = TrainConfig::from_key_values(&mut kv)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = global.threads {
        cfg.threads = t.max(1);
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate().map_err(anyhow::Error::msg)?;

    let sequences = read_container(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let first = sequences.first().context("dataset is empty")?;
    let shape = first.shape();
    let model = model_config(&mut kv, shape.height, shape.width, cfg.window)?;
    kv.finish()?;
    let split = split_dataset(sequences.len(), cfg.seed)?;

    let resume = match &args.resume {
        Some(p) => Some(read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let out = output_path(global, &args.out);
    ensure_dir(&out)?;
    let opts = TrainOptions {
        checkpoint_dir: Some(out.clone()),
        resume,
        verbose: true,
    };
    let outcome = match train(&sequences, &split, &model, &cfg, &opts) {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss { epoch, what, last_good }) => bail!(
            "non-finite {what} at epoch {epoch}; last good checkpoint is {}",
            out.join(format!("epoch_{:05}.mstw", last_good.epoch)).display()
        ),
        Err(e) => return Err(e.into()),
    };

    let mut rec = Recorder::new("train", global, config_hash);
    rec.seed(cfg.seed);
    rec.dataset(&args.data)?;

    let ckpt = outcome.checkpoint();
    let model_path = out.join("model.mstw");
    write_checkpoint(&model_path, &ckpt)?;
    if read_checkpoint(&model_path)? != ckpt {
        bail!("{} does not read back", model_path.display());
    }
    let stats_path = out.join("stats.mstn");
    write_norm_stats(&stats_path, &outcome.stats)?;
    if read_norm_stats(&stats_path)? != outcome.stats {
        bail!("{} does not read back", stats_path.display());
    }
    write_atomic(&out.join("train_report.csv"), outcome.report.to_csv(rec.record_time()).as_bytes())?;
    // Thread count does not affect results, so it stays out of the record.
    let resolved: String = format!("{}{}", cfg.to_key_values(), model.to_key_values())
        .lines()
        .filter(|l| !l.starts_with("threads"))
        .map(|l| format!("{l}\n"))
        .collect();
    write_atomic(&out.join("resolved_config.txt"), resolved.as_bytes())?;

    rec.checkpoint(&model_path)?;
    for name in artifact_names(&out)? {
        rec.artifact(&out, &out.join(name))?;
    }
    rec.finish(&out.join("manifest.json"))?;
    let last = outcome.report.epochs.last();
    eprintln!(
        "trained to epoch {} (train loss {}), outputs in {}",
        ckpt.epoch,
        last.map_or("n/a".into(), |e| format!("{:e}", e.train_loss)),
        out.display()
    );
    Ok(())
}

/// Every regular file in `dir` except the manifest, sorted by name.
pub fn artifact_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name != "manifest.json" && !name.ends_with(".tmp") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}
