use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use mstm_core::field::{read_container, read_norm_stats, Field, Sequence};
use mstm_core::metrics::{evaluate, EvalOptions, MaterialBounds, MetricsReport};

use super::{parent_dir, threads};
use crate::io::{ensure_dir, load_config, output_path, write_atomic};
use crate::manifest::Recorder;
use crate::Global;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Normalization statistics; defaults to `stats.mstn` beside `--pred`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// porous, lattice or `lb,ub`; defaults to the truth's geometry kind.
    #[arg(long)]
    pub bounds: Option<MaterialBounds>,
    /// Leading frames to leave out (default 5, the rollout seeds).
    #[arg(long)]
    pub skip: Option<usize>,
    /// Gaussian-window SSIM instead of the whole-frame form.
    #[arg(long)]
    pub windowed_ssim: bool,
    /// Weight mass by the material field.
    #[arg(long)]
    pub mass_weighted: bool,
}

/// Fields whose masked moments go into `qoi.csv`.
pub const QOI_FIELDS: [Field; 3] = [Field::Temperature, Field::Density, Field::Pressure];
pub const QOI_METRICS: [&str; 7] = [
    "truth_mean",
    "truth_std",
    "pred_mean",
    "pred_std",
    "diff_mean",
    "diff_std",
    "rel_rmse",
];

fn infer_bounds(truth: &[Sequence]) -> Result<MaterialBounds> {
    let kinds: Vec<Option<f64>> = truth.iter().map(|s| s.param("kind")).collect();
    match kinds.first().copied().flatten() {
        Some(k) if kinds.iter().all(|x| *x == Some(k)) => match k as i64 {
            0 => Ok(MaterialBounds::porous()),
            1 => Ok(MaterialBounds::lattice()),
            _ => bail!("unknown geometry kind {k}; pass --bounds"),
        },
        _ => bail!("cannot infer material bounds from the ground truth; pass --bounds"),
    }
}

pub fn qoi_csv(report: &MetricsReport) -> String {
    let mut out = String::from("field,metric,mean,std,count\n");
    for field in QOI_FIELDS {
        for metric in QOI_METRICS {
            if let Some(s) = report.aggregate_of(metric, Some(field.name())) {
                out.push_str(&format!("{},{},{:e},{:e},{}\n", field.name(), metric, s.mean, s.std, s.count));
            }
        }
    }
    out
}

pub fn run(global: &Global, args: &EvaluateArgs) -> Result<()> {
    let (mut kv, config_hash) = load_config(global)?;
    let cfg_bounds: Option<MaterialBounds> = kv.take("bounds")?;
    let cfg_skip: Option<usize> = kv.take("skip")?;
    let cfg_windowed: Option<bool> = kv.take("windowed_ssim")?;
    let cfg_weighted: Option<bool> = kv.take("mass_weighted")?;
    kv.finish()?;

    let truth = read_container(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let pred = read_container(&args.pred).with_context(|| format!("reading {}", args.pred.display()))?;
    let stats_path = args.stats.clone().unwrap_or_else(|| parent_dir(&args.pred).join("stats.mstn"));
    let stats = read_norm_stats(&stats_path).with_context(|| format!("reading {}", stats_path.display()))?;

    let bounds = match args.bounds.or(cfg_bounds) {
        Some(b) => b,
        None => infer_bounds(&truth)?,
    };
    let opts = EvalOptions {
        skip: args.skip.or(cfg_skip).unwrap_or(5),
        windowed_ssim: args.windowed_ssim || cfg_windowed.unwrap_or(false),
        mass_weighted: args.mass_weighted || cfg_weighted.unwrap_or(false),
        threads: threads(global),
        ..EvalOptions::new(bounds)
    };
    let report = evaluate(&truth, &pred, &stats, &opts)?;

    let out = output_path(global, &args.out);
    ensure_dir(&out)?;
    let files = [
        ("rows.csv", report.rows_csv()),
        ("curves.csv", report.curves_csv()),
        ("qoi.csv", qoi_csv(&report)),
        ("summary.json", report.summary_json()),
    ];
    let mut rec = Recorder::new("evaluate", global, config_hash);
    rec.dataset(&args.truth)?;
    for (name, text) in &files {
        write_atomic(&out.join(name), text.as_bytes())?;
    }
    for (name, text) in &files {
        let path = out.join(name);
        if std::fs::read_to_string(&path)? != *text {
            bail!("{} does not read back", path.display());
        }
        rec.artifact(&out, &path)?;
    }
    rec.finish(&out.join("manifest.json"))?;
    for metric in ["mse", "ssim", "soft_iou", "cm"] {
        if let Some(s) = report.aggregate_of(metric, None) {
            eprintln!("{metric:>9}: {:.6e} +/- {:.3e} (n = {})", s.mean, s.std, s.count);
        }
    }
    Ok(())
}
