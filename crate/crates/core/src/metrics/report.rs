//! Evaluating predicted sequences against ground truth and aggregating the
//! per-frame values into curves and summary statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::formulas::{
    build_masks, conservation_of_mass, masked_qoi, mse_metric, samplewise_stats, soft_iou, ssim, ssim_windowed,
    MaterialBounds,
};
use super::MetricError;
use crate::field::{normalize, Field, NormStats, Sequence};

/// Values for one (sample, timestep, field).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRow {
    pub sample: usize,
    pub timestep: usize,
    pub field: usize,
    /// Normalized units, whole frame.
    pub mse: f64,
    pub ssim: f64,
    /// Normalized units over the ground-truth mask.
    pub rmse: Option<f64>,
    pub r2: Option<f64>,
    /// Physical units: masked RMSE divided by `|truth mean|`.
    pub rel_rmse: Option<f64>,
    /// Physical units: masked moments.
    pub truth_mean: Option<f64>,
    pub truth_std: Option<f64>,
    pub pred_mean: Option<f64>,
    pub pred_std: Option<f64>,
    pub diff_mean: Option<f64>,
    pub diff_std: Option<f64>,
}

/// Values for one (sample, timestep).
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub sample: usize,
    pub timestep: usize,
    pub soft_iou: f64,
    pub cm: f64,
    /// `None` when the ground-truth mask is empty.
    pub hard_iou: Option<f64>,
}

type FieldGetter = fn(&FieldRow) -> Option<f64>;
type StepGetter = fn(&StepRow) -> Option<f64>;

/// Per-field metrics in export order.
pub const FIELD_METRICS: &[(&str, FieldGetter)] = &[
    ("mse", |r| Some(r.mse)),
    ("ssim", |r| Some(r.ssim)),
    ("rmse", |r| r.rmse),
    ("r2", |r| r.r2),
    ("rel_rmse", |r| r.rel_rmse),
    ("truth_mean", |r| r.truth_mean),
    ("truth_std", |r| r.truth_std),
    ("pred_mean", |r| r.pred_mean),
    ("pred_std", |r| r.pred_std),
    ("diff_mean", |r| r.diff_mean),
    ("diff_std", |r| r.diff_std),
];

pub const STEP_METRICS: &[(&str, StepGetter)] = &[
    ("soft_iou", |r| Some(r.soft_iou)),
    ("cm", |r| Some(r.cm)),
    ("hard_iou", |r| r.hard_iou),
];

/// Mean and population standard deviation of a set of values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Summary of `values`, or `None` if empty. Values are sorted before
/// summation so the result does not depend on their order.
pub fn summarize(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    Some(Stat {
        mean,
        std: (dev.iter().sum::<f64>() / n).sqrt(),
        count: v.len(),
    })
}

/// One point of a metric-versus-timestep curve. `field` is `None` for
/// curves averaged over fields and for per-timestep metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub metric: String,
    pub field: Option<String>,
    pub timestep: usize,
    pub stat: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub metric: String,
    pub field: Option<String>,
    pub stat: Stat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub field_rows: Vec<FieldRow>,
    pub step_rows: Vec<StepRow>,
    /// Per timestep, over samples (and fields where applicable).
    pub curves: Vec<CurvePoint>,
    /// Over every sample, timestep and field.
    pub aggregates: Vec<Aggregate>,
}

fn field_name(f: usize) -> String {
    Field::from_index(f).map_or_else(|| format!("field{f}"), |x| x.name().to_owned())
}

/// Builds curves and grand aggregates from the rows. Empty or missing
/// values (empty masks, undefined R^2) are left out.
pub fn aggregate(field_rows: Vec<FieldRow>, step_rows: Vec<StepRow>) -> Result<MetricsReport, MetricError> {
    if field_rows.is_empty() && step_rows.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut curves = Vec::new();
    let mut aggregates = Vec::new();
    let fields: Vec<usize> = {
        let mut f: Vec<usize> = field_rows.iter().map(|r| r.field).collect();
        f.sort_unstable();
        f.dedup();
        f
    };
    for &(name, get) in FIELD_METRICS {
        let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut by_tf: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        let mut by_f: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &field_rows {
            if let Some(v) = get(r) {
                by_t.entry(r.timestep).or_default().push(v);
                by_tf.entry((r.field, r.timestep)).or_default().push(v);
                by_f.entry(r.field).or_default().push(v);
                all.push(v);
            }
        }
        for (t, vals) in &by_t {
            curves.push(CurvePoint {
                metric: name.into(),
                field: None,
                timestep: *t,
                stat: summarize(vals).expect("nonempty"),
            });
        }
        for ((f, t), vals) in &by_tf {
            curves.push(CurvePoint {
                metric: name.into(),
                field: Some(field_name(*f)),
                timestep: *t,
                stat: summarize(vals).expect("nonempty"),
            });
        }
        if let Some(stat) = summarize(&all) {
            aggregates.push(Aggregate {
                metric: name.into(),
                field: None,
                stat,
            });
        }
        for &f in &fields {
            if let Some(stat) = by_f.get(&f).and_then(|v| summarize(v)) {
                aggregates.push(Aggregate {
                    metric: name.into(),
                    field: Some(field_name(f)),
                    stat,
                });
            }
        }
    }
    for &(name, get) in STEP_METRICS {
        let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        for r in &step_rows {
            if let Some(v) = get(r) {
                by_t.entry(r.timestep).or_default().push(v);
                all.push(v);
            }
        }
        for (t, vals) in &by_t {
            curves.push(CurvePoint {
                metric: name.into(),
                field: None,
                timestep: *t,
                stat: summarize(vals).expect("nonempty"),
            });
        }
        if let Some(stat) = summarize(&all) {
            aggregates.push(Aggregate {
                metric: name.into(),
                field: None,
                stat,
            });
        }
    }
    Ok(MetricsReport {
        field_rows,
        step_rows,
        curves,
        aggregates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub bounds: MaterialBounds,
    /// Leading frames left out of the evaluation (the rollout seeds).
    pub skip: usize,
    /// Use the Gaussian-window SSIM instead of the whole-frame form.
    pub windowed_ssim: bool,
    /// Weight mass by the material field instead of `f = 1`.
    pub mass_weighted: bool,
    pub threads: usize,
}

impl EvalOptions {
    pub fn new(bounds: MaterialBounds) -> Self {
        Self {
            bounds,
            skip: 5,
            windowed_ssim: false,
            mass_weighted: false,
            threads: 1,
        }
    }
}

fn plane(data: &[f32], f: usize, n: usize) -> Vec<f64> {
    data[f * n..(f + 1) * n].iter().map(|&v| v as f64).collect()
}

fn check_alignment(truth: &[Sequence], pred: &[Sequence]) -> Result<(), MetricError> {
    let mut bad = Vec::new();
    for i in 0..truth.len().max(pred.len()) {
        match (truth.get(i), pred.get(i)) {
            (Some(t), Some(p)) if t.len() == p.len() && t.shape() == p.shape() && t.params == p.params => {}
            _ => bad.push(i),
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(MetricError::Misaligned(bad))
    }
}

type SampleRows = (Vec<FieldRow>, Vec<StepRow>);

fn evaluate_sample(
    sample: usize,
    truth: &Sequence,
    pred: &Sequence,
    stats: &NormStats,
    opts: &EvalOptions,
) -> Result<SampleRows, MetricError> {
    let shape = truth.shape();
    let n = shape.plane();
    let mat = Field::Materials.index();
    let rho = Field::Density.index();
    let mut field_rows = Vec::new();
    let mut step_rows = Vec::new();
    for t in opts.skip.min(truth.len())..truth.len() {
        let (gt_raw, p_raw) = (&truth.frames[t], &pred.frames[t]);
        let gt_norm = normalize(gt_raw, stats)?;
        let p_norm = normalize(p_raw, stats)?;
        let (gm, pm) = (plane(gt_norm.data(), mat, n), plane(p_norm.data(), mat, n));
        let masks = build_masks(&gm, &pm, &opts.bounds)?;
        let (gr, pr) = (plane(gt_raw.data(), rho, n), plane(p_raw.data(), rho, n));
        let cm = if opts.mass_weighted {
            conservation_of_mass(&pr, &gr, Some(&pm), Some(&gm))?
        } else {
            conservation_of_mass(&pr, &gr, None, None)?
        };
        let mut hard_iou = None;
        for f in 0..shape.fields {
            let (g, p) = (plane(gt_norm.data(), f, n), plane(p_norm.data(), f, n));
            let s = if opts.windowed_ssim {
                ssim_windowed(&p, &g, shape.height, shape.width, 1.0)?
            } else {
                ssim(&p, &g, 1.0)?
            };
            let sw = samplewise_stats(&p, &g, &masks)?;
            hard_iou = hard_iou.or(sw.map(|s| s.iou));
            let (gp, pp) = (plane(gt_raw.data(), f, n), plane(p_raw.data(), f, n));
            let qoi = masked_qoi(&pp, &gp, &masks)?;
            let phys = samplewise_stats(&pp, &gp, &masks)?;
            let rel_rmse = match (phys, qoi) {
                (Some(s), Some(q)) if q.truth.mean != 0.0 => Some(s.rmse / q.truth.mean.abs()),
                _ => None,
            };
            field_rows.push(FieldRow {
                sample,
                timestep: t,
                field: f,
                mse: mse_metric(&p, &g, None)?,
                ssim: s,
                rmse: sw.map(|s| s.rmse),
                r2: sw.and_then(|s| s.r2),
                rel_rmse,
                truth_mean: qoi.map(|q| q.truth.mean),
                truth_std: qoi.map(|q| q.truth.std),
                pred_mean: qoi.and_then(|q| q.pred.map(|m| m.mean)),
                pred_std: qoi.and_then(|q| q.pred.map(|m| m.std)),
                diff_mean: qoi.map(|q| q.diff.mean),
                diff_std: qoi.map(|q| q.diff.std),
            });
        }
        step_rows.push(StepRow {
            sample,
            timestep: t,
            soft_iou: soft_iou(&pm, &gm, &opts.bounds)?,
            cm,
            hard_iou,
        });
    }
    Ok((field_rows, step_rows))
}

/// Compares each predicted sequence with the ground truth at the same index.
/// Voxelwise metrics (MSE, SSIM, RMSE, R^2, IoU) use fields normalized with
/// `stats`; mass and the masked moments use physical values.
pub fn evaluate(
    truth: &[Sequence],
    pred: &[Sequence],
    stats: &NormStats,
    opts: &EvalOptions,
) -> Result<MetricsReport, MetricError> {
    check_alignment(truth, pred)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| MetricError::Invalid(format!("thread pool: {e}")))?;
    let per_sample: Vec<Result<SampleRows, MetricError>> = pool.install(|| {
        (0..truth.len())
            .into_par_iter()
            .map(|s| evaluate_sample(s, &truth[s], &pred[s], stats, opts))
            .collect()
    });
    let mut field_rows = Vec::new();
    let mut step_rows = Vec::new();
    for r in per_sample {
        let (f, s) = r?;
        field_rows.extend(f);
        step_rows.extend(s);
    }
    aggregate(field_rows, step_rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl MetricsReport {
    /// One row per sample x timestep x field; per-timestep metrics repeat
    /// on each field's row.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("sample,timestep,field");
        for (name, _) in FIELD_METRICS {
            out.push(',');
            out.push_str(name);
        }
        for (name, _) in STEP_METRICS {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let steps: BTreeMap<(usize, usize), &StepRow> =
            self.step_rows.iter().map(|r| ((r.sample, r.timestep), r)).collect();
        for r in &self.field_rows {
            out.push_str(&format!("{},{},{}", r.sample, r.timestep, field_name(r.field)));
            for (_, get) in FIELD_METRICS {
                out.push(',');
                out.push_str(&opt(get(r)));
            }
            let step = steps.get(&(r.sample, r.timestep));
            for (_, get) in STEP_METRICS {
                out.push(',');
                out.push_str(&opt(step.and_then(|s| get(s))));
            }
            out.push('\n');
        }
        out
    }

    /// `metric,field,timestep,mean,std,count`; `field` is `all` for curves
    /// over every field.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("metric,field,timestep,mean,std,count\n");
        for c in &self.curves {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{}\n",
                c.metric,
                c.field.as_deref().unwrap_or("all"),
                c.timestep,
                c.stat.mean,
                c.stat.std,
                c.stat.count
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            samples: usize,
            timesteps: usize,
            aggregates: &'a [Aggregate],
        }
        let mut samples: Vec<usize> = self.step_rows.iter().map(|r| r.sample).collect();
        samples.dedup();
        let mut steps: Vec<usize> = self.step_rows.iter().map(|r| r.timestep).collect();
        steps.sort_unstable();
        steps.dedup();
        let s = Summary {
            samples: samples.len(),
            timesteps: steps.len(),
            aggregates: &self.aggregates,
        };
        let mut out = serde_json::to_string_pretty(&s).expect("summary serializes");
        out.push('\n');
        out
    }

    pub fn aggregate_of(&self, metric: &str, field: Option<&str>) -> Option<Stat> {
        self.aggregates
            .iter()
            .find(|a| a.metric == metric && a.field.as_deref() == field)
            .map(|a| a.stat)
    }

    /// Curve points of `metric` for `field` (`None` for all fields), in
    /// timestep order.
    pub fn curve(&self, metric: &str, field: Option<&str>) -> Vec<(usize, Stat)> {
        self.curves
            .iter()
            .filter(|c| c.metric == metric && c.field.as_deref() == field)
            .map(|c| (c.timestep, c.stat))
            .collect()
    }
}
