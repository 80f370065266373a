//! Per-frame comparison metrics. Inputs are flat row-major planes of equal
//! length; every sum is accumulated in f64.

use std::str::FromStr;

use super::MetricError;

/// Interval of material-field values counted as material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialBounds {
    pub lb: f64,
    pub ub: f64,
}

impl MaterialBounds {
    pub fn new(lb: f64, ub: f64) -> Result<Self, MetricError> {
        if !(lb.is_finite() && ub.is_finite() && ub > lb) {
            return Err(MetricError::InvalidBounds { lb, ub });
        }
        Ok(Self { lb, ub })
    }

    pub fn porous() -> Self {
        Self { lb: 0.20, ub: 0.30 }
    }

    pub fn lattice() -> Self {
        Self { lb: 0.54, ub: 0.99 }
    }

    /// Sigmoid smoothness, `0.05 (ub - lb)`.
    pub fn k(&self) -> f64 {
        0.05 * (self.ub - self.lb)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lb <= v && v <= self.ub
    }

    /// `sigma((v - lb) / k) * sigma((ub - v) / k)`.
    pub fn membership(&self, v: f64) -> f64 {
        let k = self.k();
        sigmoid((v - self.lb) / k) * sigmoid((self.ub - v) / k)
    }
}

/// `porous`, `lattice`, or an explicit `lb,ub` pair.
impl FromStr for MaterialBounds {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "porous" => Ok(Self::porous()),
            "lattice" => Ok(Self::lattice()),
            other => {
                let bad = || MetricError::UnknownBounds(other.to_owned());
                let (a, b) = other.split_once(',').ok_or_else(bad)?;
                let lb = a.trim().parse().map_err(|_| bad())?;
                let ub = b.trim().parse().map_err(|_| bad())?;
                Self::new(lb, ub)
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::Length { left: a, right: b });
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean squared difference over the cells where `mask` is set (all cells
/// when `mask` is `None`).
pub fn mse_metric(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<f64, MetricError> {
    check_len(pred.len(), truth.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    match mask {
        Some(m) => {
            check_len(m.len(), truth.len())?;
            for ((p, g), &on) in pred.iter().zip(truth).zip(m) {
                if on {
                    sum += (p - g) * (p - g);
                    n += 1;
                }
            }
        }
        None => {
            for (p, g) in pred.iter().zip(truth) {
                sum += (p - g) * (p - g);
            }
            n = pred.len();
        }
    }
    if n == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Soft intersection over union of the interval memberships. Defined as 1
/// when both membership fields are identically zero.
pub fn soft_iou(pred: &[f64], truth: &[f64], bounds: &MaterialBounds) -> Result<f64, MetricError> {
    check_len(pred.len(), truth.len())?;
    let (mut inter, mut union) = (0.0, 0.0);
    for (&p, &g) in pred.iter().zip(truth) {
        let (mp, mg) = (bounds.membership(p), bounds.membership(g));
        inter += mp.min(mg);
        union += mp.max(mg);
    }
    Ok(if union == 0.0 { 1.0 } else { inter / union })
}

/// SSIM of two whole frames from global means, population variances and
/// covariance, with `C1 = (0.01 L)^2` and `C2 = (0.03 L)^2`.
pub fn ssim(pred: &[f64], truth: &[f64], dynamic_range: f64) -> Result<f64, MetricError> {
    check_len(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = truth.iter().sum::<f64>() / n;
    let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(truth) {
        vp += (p - mp) * (p - mp);
        vg += (g - mg) * (g - mg);
        cov += (p - mp) * (g - mg);
    }
    Ok(ssim_from_moments(mp, mg, vp / n, vg / n, cov / n, dynamic_range))
}

fn ssim_from_moments(mp: f64, mg: f64, vp: f64, vg: f64, cov: f64, l: f64) -> f64 {
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    ((2.0 * mp * mg + c1) * (2.0 * cov + c2)) / ((mp * mp + mg * mg + c1) * (vp + vg + c2))
}

/// Mean of the local SSIM map under an 11x11 Gaussian window
/// (sigma 1.5), evaluated where the window fits inside the frame. The
/// window shrinks to the frame for frames smaller than 11 cells.
pub fn ssim_windowed(
    pred: &[f64],
    truth: &[f64],
    height: usize,
    width: usize,
    dynamic_range: f64,
) -> Result<f64, MetricError> {
    check_len(pred.len(), truth.len())?;
    check_len(pred.len(), height * width)?;
    let size = 11.min(height).min(width);
    let centre = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - centre).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=height - size {
        for x0 in 0..=width - size {
            let (mut mp, mut mg) = (0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let w = g[dy] * g[dx] / norm;
                    let i = (y0 + dy) * width + x0 + dx;
                    mp += w * pred[i];
                    mg += w * truth[i];
                }
            }
            let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let w = g[dy] * g[dx] / norm;
                    let i = (y0 + dy) * width + x0 + dx;
                    vp += w * (pred[i] - mp).powi(2);
                    vg += w * (truth[i] - mg).powi(2);
                    cov += w * (pred[i] - mp) * (truth[i] - mg);
                }
            }
            total += ssim_from_moments(mp, mg, vp, vg, cov, dynamic_range);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `|M_p - M_g| / M_g` with `M = sum rho * f`; `f = 1` when the fraction
/// fields are omitted.
pub fn conservation_of_mass(
    pred_density: &[f64],
    true_density: &[f64],
    pred_fraction: Option<&[f64]>,
    true_fraction: Option<&[f64]>,
) -> Result<f64, MetricError> {
    check_len(pred_density.len(), true_density.len())?;
    let mass = |rho: &[f64], f: Option<&[f64]>| -> Result<f64, MetricError> {
        match f {
            Some(f) => {
                check_len(f.len(), rho.len())?;
                Ok(rho.iter().zip(f).map(|(r, w)| r * w).sum())
            }
            None => Ok(rho.iter().sum()),
        }
    };
    let mp = mass(pred_density, pred_fraction)?;
    let mg = mass(true_density, true_fraction)?;
    if !(mg > 0.0) {
        return Err(MetricError::NonPositiveMass(mg));
    }
    Ok((mp - mg).abs() / mg)
}

/// Hard material masks of the ground truth and the prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPair {
    pub truth: Vec<bool>,
    pub pred: Vec<bool>,
}

impl MaskPair {
    pub fn truth_count(&self) -> usize {
        self.truth.iter().filter(|&&m| m).count()
    }

    pub fn pred_count(&self) -> usize {
        self.pred.iter().filter(|&&m| m).count()
    }
}

pub fn build_masks(true_material: &[f64], pred_material: &[f64], bounds: &MaterialBounds) -> Result<MaskPair, MetricError> {
    check_len(pred_material.len(), true_material.len())?;
    Ok(MaskPair {
        truth: true_material.iter().map(|&v| bounds.contains(v)).collect(),
        pred: pred_material.iter().map(|&v| bounds.contains(v)).collect(),
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    /// Two-pass moments; `None` for an empty input.
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return None;
        }
        let mean = sum / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// Masked field moments. Ground-truth moments are taken over `M_g`,
/// prediction moments over `M_p`, and absolute differences
/// `|g * M_g - p * M_p|` over `M_g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QoiRow {
    pub truth: Moments,
    /// `None` when the prediction mask is empty.
    pub pred: Option<Moments>,
    pub diff: Moments,
}

/// `None` when the ground-truth mask is empty.
pub fn masked_qoi(pred: &[f64], truth: &[f64], masks: &MaskPair) -> Result<Option<QoiRow>, MetricError> {
    check_len(pred.len(), truth.len())?;
    check_len(masks.truth.len(), truth.len())?;
    check_len(masks.pred.len(), pred.len())?;
    let on_g = || truth.iter().zip(&masks.truth).filter(|(_, &m)| m).map(|(&g, _)| g);
    let Some(truth_m) = Moments::of(on_g()) else {
        return Ok(None);
    };
    let pred_m = Moments::of(pred.iter().zip(&masks.pred).filter(|(_, &m)| m).map(|(&p, _)| p));
    let diffs = (0..truth.len())
        .filter(|&i| masks.truth[i])
        .map(|i| (truth[i] - masked(pred[i], masks.pred[i])).abs());
    let diff = Moments::of(diffs).expect("ground-truth mask is nonempty");
    Ok(Some(QoiRow {
        truth: truth_m,
        pred: pred_m,
        diff,
    }))
}

fn masked(v: f64, on: bool) -> f64 {
    if on {
        v
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleStats {
    pub rmse: f64,
    /// `None` when the masked ground truth is constant.
    pub r2: Option<f64>,
    pub iou: f64,
}

/// RMSE and R^2 of the masked prediction `p * M_p` against the ground truth
/// over `M_g`, and the hard IoU `|M_g & M_p| / |M_g | M_p|`. `None` when the
/// ground-truth mask is empty.
pub fn samplewise_stats(pred: &[f64], truth: &[f64], masks: &MaskPair) -> Result<Option<SampleStats>, MetricError> {
    check_len(pred.len(), truth.len())?;
    check_len(masks.truth.len(), truth.len())?;
    check_len(masks.pred.len(), pred.len())?;
    let n = masks.truth_count();
    if n == 0 {
        return Ok(None);
    }
    let mut mean = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..truth.len() {
        if masks.truth[i] {
            mean += truth[i];
            lo = lo.min(truth[i]);
            hi = hi.max(truth[i]);
        }
    }
    mean /= n as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..truth.len() {
        let (g, p) = (masks.truth[i], masks.pred[i]);
        if g {
            let d = masked(pred[i], p) - truth[i];
            ss_res += d * d;
            ss_tot += (truth[i] - mean) * (truth[i] - mean);
        }
        inter += (g && p) as usize;
        union += (g || p) as usize;
    }
    Ok(Some(SampleStats {
        rmse: (ss_res / n as f64).sqrt(),
        r2: (hi > lo && ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        iou: inter as f64 / union as f64,
    }))
}
