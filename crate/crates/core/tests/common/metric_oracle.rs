//! Brute-force metric references on `H x W` grids indexed as `[i][j]`.
//! Masked quantities are formed by materializing the value lists
//! explicitly; moments use the raw-moment form `E[x^2] - E[x]^2`.

use std::collections::BTreeSet;

pub type Grid = Vec<Vec<f64>>;

pub fn to_grid(flat: &[f64], h: usize, w: usize) -> Grid {
    (0..h).map(|i| flat[i * w..(i + 1) * w].to_vec()).collect()
}

fn cells(g: &Grid) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..g.len()).flat_map(move |i| (0..g[i].len()).map(move |j| (i, j)))
}

pub fn mse(p: &Grid, g: &Grid, mask: Option<&BTreeSet<(usize, usize)>>) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (i, j) in cells(g) {
        if mask.map_or(true, |m| m.contains(&(i, j))) {
            total += (p[i][j] - g[i][j]).powi(2);
            count += 1.0;
        }
    }
    total / count
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn soft_iou(p: &Grid, g: &Grid, lb: f64, ub: f64) -> f64 {
    let k = 0.05 * (ub - lb);
    let member = |v: f64| logistic((v - lb) / k) * logistic((ub - v) / k);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j) in cells(g) {
        let (a, b) = (member(p[i][j]), member(g[i][j]));
        num += if a < b { a } else { b };
        den += if a > b { a } else { b };
    }
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Textbook SSIM with moments from `E[xy] - E[x]E[y]`.
pub fn ssim(p: &Grid, g: &Grid, l: f64) -> f64 {
    let n = (g.len() * g[0].len()) as f64;
    let (mut sp, mut sg, mut spp, mut sgg, mut spg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, j) in cells(g) {
        let (a, b) = (p[i][j], g[i][j]);
        sp += a;
        sg += b;
        spp += a * a;
        sgg += b * b;
        spg += a * b;
    }
    let (mp, mg) = (sp / n, sg / n);
    let vp = spp / n - mp * mp;
    let vg = sgg / n - mg * mg;
    let cov = spg / n - mp * mg;
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    (2.0 * mp * mg + c1) * (2.0 * cov + c2) / ((mp * mp + mg * mg + c1) * (vp + vg + c2))
}

pub fn cm(rho_p: &Grid, rho_g: &Grid, f_p: Option<&Grid>, f_g: Option<&Grid>) -> f64 {
    let mut mp = 0.0;
    let mut mg = 0.0;
    for (i, j) in cells(rho_g) {
        mp += rho_p[i][j] * f_p.map_or(1.0, |f| f[i][j]);
        mg += rho_g[i][j] * f_g.map_or(1.0, |f| f[i][j]);
    }
    (mp - mg).abs() / mg
}

pub fn mask(m: &Grid, lb: f64, ub: f64) -> BTreeSet<(usize, usize)> {
    cells(m).filter(|&(i, j)| lb <= m[i][j] && m[i][j] <= ub).collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    (m, (sq - m * m).max(0.0).sqrt())
}

/// `(G, P, D)` value lists: truth on its mask, prediction on its mask, and
/// `|g M_g - p M_p|` on the truth mask.
pub fn value_sets(p: &Grid, g: &Grid, mg: &BTreeSet<(usize, usize)>, mp: &BTreeSet<(usize, usize)>) -> [Vec<f64>; 3] {
    let gs: Vec<f64> = mg.iter().map(|&(i, j)| g[i][j]).collect();
    let ps: Vec<f64> = mp.iter().map(|&(i, j)| p[i][j]).collect();
    let ds: Vec<f64> = mg
        .iter()
        .map(|&(i, j)| {
            let pm = if mp.contains(&(i, j)) { p[i][j] } else { 0.0 };
            (g[i][j] - pm).abs()
        })
        .collect();
    [gs, ps, ds]
}

/// `((mean_g, std_g), (mean_p, std_p), (mean_d, std_d))`.
pub fn qoi(p: &Grid, g: &Grid, mg: &BTreeSet<(usize, usize)>, mp: &BTreeSet<(usize, usize)>) -> [(f64, f64); 3] {
    let [gs, ps, ds] = value_sets(p, g, mg, mp);
    [mean_std(&gs), mean_std(&ps), mean_std(&ds)]
}

/// `(rmse, r2, iou)` over the truth mask with the prediction masked by its
/// own mask.
pub fn samplewise(
    p: &Grid,
    g: &Grid,
    mg: &BTreeSet<(usize, usize)>,
    mp: &BTreeSet<(usize, usize)>,
) -> (f64, Option<f64>, f64) {
    let n = mg.len() as f64;
    let pm = |i: usize, j: usize| if mp.contains(&(i, j)) { p[i][j] } else { 0.0 };
    let gbar = mg.iter().map(|&(i, j)| g[i][j]).sum::<f64>() / n;
    let ss_res: f64 = mg.iter().map(|&(i, j)| (pm(i, j) - g[i][j]).powi(2)).sum();
    let ss_tot: f64 = mg.iter().map(|&(i, j)| (g[i][j] - gbar).powi(2)).sum();
    let inter = mg.intersection(mp).count() as f64;
    let union = mg.union(mp).count() as f64;
    let r2 = if ss_tot > 0.0 { Some(1.0 - ss_res / ss_tot) } else { None };
    ((ss_res / n).sqrt(), r2, inter / union)
}

/// One random 60x60 comparison: a generic field pair, a material pair that
/// straddles the bounds, and a positive density pair.
pub struct Instance {
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
    pub mat_pred: Vec<f64>,
    pub mat_truth: Vec<f64>,
    pub rho_pred: Vec<f64>,
    pub rho_truth: Vec<f64>,
}

pub fn random_instance(rng: &mut impl rand::Rng, n: usize) -> Instance {
    let cells = n * n;
    let truth: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..1.0)).collect();
    let pred = truth.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    let mat_truth: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mat_pred = mat_truth
        .iter()
        .map(|v| (v + rng.gen_range(-0.1..0.1f64)).clamp(0.0, 1.0))
        .collect();
    let rho_truth: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.5..20.0)).collect();
    let rho_pred = rho_truth.iter().map(|v| v * rng.gen_range(0.95..1.05)).collect();
    Instance {
        pred,
        truth,
        mat_pred,
        mat_truth,
        rho_pred,
        rho_truth,
    }
}
