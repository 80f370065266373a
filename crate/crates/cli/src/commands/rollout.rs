use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mstm_core::field::{compute_norm_stats, read_container, split_dataset, write_container, write_norm_stats, Sequence};
use mstm_core::nn::{read_checkpoint, ModelConfig};
use mstm_core::train::{evaluate_rollouts, TrainConfig};

use super::threads;
use crate::io::{ensure_dir, load_config, output_path};
use crate::manifest::Recorder;
use crate::Global;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// The container the checkpoint was trained on.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Which part of the seeded split to roll out.
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run(global: &Global, args: &RolloutArgs) -> Result<()> {
    // The training config is accepted as-is so one file drives both steps;
    // only the split seed matters here.
    let (mut kv, config_hash) = load_config(global)?;
    let train_cfg = TrainConfig::from_key_values(&mut kv)?;
    kv.take::<String>("model")?;
    ModelConfig::from_key_values(&mut kv, ModelConfig::default())?;
    kv.finish()?;
    let seed = global.seed.unwrap_or(train_cfg.seed);

    let ckpt = read_checkpoint(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let sequences = read_container(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let split = split_dataset(sequences.len(), seed)?;
    let train_set: Vec<Sequence> = split.train.iter().map(|&i| sequences[i].clone()).collect();
    let stats = compute_norm_stats(&train_set)?;
    if stats.hash() != ckpt.stats_hash {
        bail!(
            "normalization statistics of this dataset and seed ({}) do not match the checkpoint ({}); \
             use the dataset and seed the model was trained with",
            hex(&stats.hash()),
            hex(&ckpt.stats_hash)
        );
    }

    let picked = match args.split {
        Split::Train => &split.train,
        Split::Val => &split.val,
        Split::Test => &split.test,
    };
    let chosen: Vec<Sequence> = picked.iter().map(|&i| sequences[i].clone()).collect();
    let pairs = evaluate_rollouts(&ckpt.params, &stats, &chosen, threads(global))?;
    for (pair, &idx) in pairs.iter().zip(picked) {
        if let Some(stop) = &pair.stopped {
            eprintln!("warning: sequence {idx}: rollout stopped at step {}: {}", stop.step, stop.reason);
        }
    }
    let truth: Vec<Sequence> = pairs.iter().map(|p| p.truth.clone()).collect();
    let pred: Vec<Sequence> = pairs.into_iter().map(|p| p.prediction).collect();

    let out = output_path(global, &args.out);
    ensure_dir(&out)?;
    let truth_path = out.join("truth.mstm");
    let pred_path = out.join("pred.mstm");
    let stats_path = out.join("stats.mstn");
    write_container(&truth_path, &truth)?;
    write_container(&pred_path, &pred)?;
    write_norm_stats(&stats_path, &stats)?;
    if read_container(&pred_path)? != pred || read_container(&truth_path)? != truth {
        bail!("rollout containers in {} do not read back", out.display());
    }
    let indices: String = picked.iter().map(|i| format!("{i}\n")).collect();
    crate::io::write_atomic(&out.join("indices.txt"), indices.as_bytes())?;

    let mut rec = Recorder::new("rollout", global, config_hash);
    rec.seed(seed);
    rec.dataset(&args.data)?;
    rec.checkpoint(&args.checkpoint)?;
    for name in ["indices.txt", "pred.mstm", "stats.mstn", "truth.mstm"] {
        rec.artifact(&out, &out.join(name))?;
    }
    rec.finish(&out.join("manifest.json"))?;
    eprintln!(
        "rolled out {} sequences (stats {}), outputs in {}",
        truth.len(),
        &hex(&stats.hash())[..12],
        out.display()
    );
    Ok(())
}
