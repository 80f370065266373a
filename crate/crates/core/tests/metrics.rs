mod common;

use common::metric_oracle as oracle;
use mstm_core::field::{FieldFrame, FrameShape, NormStats, Sequence, FieldRange, NUM_FIELDS};
use mstm_core::hydro::{build_geometry, derive_fields, downsample, GeometryConfig};
use mstm_core::metrics::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 60;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn formulas_match_brute_force_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let b = MaterialBounds::lattice();
    for _ in 0..20 {
        let x = oracle::random_instance(&mut rng, N);
        let g = |v: &[f64]| oracle::to_grid(v, N, N);
        let (p, t) = (g(&x.pred), g(&x.truth));
        let (mp, mt) = (g(&x.mat_pred), g(&x.mat_truth));
        let masks = build_masks(&x.mat_truth, &x.mat_pred, &b).unwrap();
        let om_g = oracle::mask(&mt, b.lb, b.ub);
        let om_p = oracle::mask(&mp, b.lb, b.ub);
        assert_eq!(masks.truth_count(), om_g.len());
        assert_eq!(masks.pred_count(), om_p.len());

        assert!(close(mse_metric(&x.pred, &x.truth, None).unwrap(), oracle::mse(&p, &t, None), 1e-12));
        assert!(close(
            mse_metric(&x.pred, &x.truth, Some(&masks.truth)).unwrap(),
            oracle::mse(&p, &t, Some(&om_g)),
            1e-12
        ));
        assert!(close(soft_iou(&x.mat_pred, &x.mat_truth, &b).unwrap(), oracle::soft_iou(&mp, &mt, b.lb, b.ub), 1e-12));
        assert!(close(ssim(&x.pred, &x.truth, 1.0).unwrap(), oracle::ssim(&p, &t, 1.0), 1e-10));
        let (rp, rt) = (g(&x.rho_pred), g(&x.rho_truth));
        assert!(close(
            conservation_of_mass(&x.rho_pred, &x.rho_truth, None, None).unwrap(),
            oracle::cm(&rp, &rt, None, None),
            1e-12
        ));
        assert!(close(
            conservation_of_mass(&x.rho_pred, &x.rho_truth, Some(&x.mat_pred), Some(&x.mat_truth)).unwrap(),
            oracle::cm(&rp, &rt, Some(&mp), Some(&mt)),
            1e-12
        ));

        let q = masked_qoi(&x.pred, &x.truth, &masks).unwrap().unwrap();
        let [og, op, od] = oracle::qoi(&p, &t, &om_g, &om_p);
        let pm = q.pred.unwrap();
        for (got, want) in [
            (q.truth.mean, og.0),
            (q.truth.std, og.1),
            (pm.mean, op.0),
            (pm.std, op.1),
            (q.diff.mean, od.0),
            (q.diff.std, od.1),
        ] {
            assert!(close(got, want, 1e-10), "{got} vs {want}");
        }

        let s = samplewise_stats(&x.pred, &x.truth, &masks).unwrap().unwrap();
        let (rmse, r2, iou) = oracle::samplewise(&p, &t, &om_g, &om_p);
        assert!(close(s.rmse, rmse, 1e-12));
        assert!(close(s.r2.unwrap(), r2.unwrap(), 1e-12));
        assert!(close(s.iou, iou, 1e-15));
    }
}

#[test]
fn identity_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = oracle::random_instance(&mut rng, N);
    let b = MaterialBounds::lattice();
    let masks = build_masks(&x.mat_truth, &x.mat_truth, &b).unwrap();
    assert_eq!(mse_metric(&x.truth, &x.truth, None).unwrap(), 0.0);
    assert_eq!(soft_iou(&x.mat_truth, &x.mat_truth, &b).unwrap(), 1.0);
    assert!(close(ssim(&x.truth, &x.truth, 1.0).unwrap(), 1.0, 1e-15));
    assert_eq!(conservation_of_mass(&x.rho_truth, &x.rho_truth, None, None).unwrap(), 0.0);
    let q = masked_qoi(&x.truth, &x.truth, &masks).unwrap().unwrap();
    assert_eq!((q.diff.mean, q.diff.std), (0.0, 0.0));
    assert_eq!(q.pred, Some(q.truth));
    let s = samplewise_stats(&x.truth, &x.truth, &masks).unwrap().unwrap();
    assert_eq!((s.rmse, s.r2, s.iou), (0.0, Some(1.0), 1.0));
}

#[test]
fn windowed_ssim_identity_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = oracle::random_instance(&mut rng, 20);
    assert!(close(ssim_windowed(&x.truth, &x.truth, 20, 20, 1.0).unwrap(), 1.0, 1e-12));
    let s = ssim_windowed(&x.pred, &x.truth, 20, 20, 1.0).unwrap();
    assert!(s < 1.0 && s > -1.0);
    // Small frames shrink the window to the frame.
    assert!(close(ssim_windowed(&x.truth[..16], &x.truth[..16], 4, 4, 1.0).unwrap(), 1.0, 1e-12));
}

#[test]
fn cm_is_asymmetric() {
    let a = [1.0, 2.0, 3.0];
    let b = [1.1, 2.2, 3.3];
    let ab = conservation_of_mass(&a, &b, None, None).unwrap();
    let ba = conservation_of_mass(&b, &a, None, None).unwrap();
    assert!(close(ab, 0.6 / 6.6, 1e-15));
    assert!(close(ba, 0.1, 1e-15));
    assert!(matches!(
        conservation_of_mass(&[1.0], &[0.0], None, None),
        Err(MetricError::NonPositiveMass(_))
    ));
}

#[test]
fn r2_is_asymmetric() {
    let b = MaterialBounds::new(-10.0, 10.0).unwrap();
    let g = [0.0, 1.0, 2.0, 3.0];
    let p = [0.0, 2.0, 4.0, 6.0];
    let m = build_masks(&g, &p, &b).unwrap();
    let gp = samplewise_stats(&p, &g, &m).unwrap().unwrap().r2.unwrap();
    let pg = samplewise_stats(&g, &p, &build_masks(&p, &g, &b).unwrap()).unwrap().unwrap().r2.unwrap();
    assert!(close(gp, 1.0 - 14.0 / 5.0, 1e-12));
    assert!(close(pg, 1.0 - 14.0 / 20.0, 1e-12));
}

#[test]
fn uniform_masks() {
    let b = MaterialBounds::porous();
    let m = build_masks(&[0.25; 10], &[0.5; 10], &b).unwrap();
    assert!(m.truth.iter().all(|&v| v));
    assert!(m.pred.iter().all(|&v| !v));
    let m = build_masks(&[0.2; 3], &[0.3; 3], &b).unwrap();
    assert_eq!((m.truth_count(), m.pred_count()), (3, 3));
}

#[test]
fn empty_truth_mask_yields_no_row() {
    let b = MaterialBounds::porous();
    let m = build_masks(&[0.9; 4], &[0.25; 4], &b).unwrap();
    assert_eq!(masked_qoi(&[1.0; 4], &[1.0; 4], &m).unwrap(), None);
    assert_eq!(samplewise_stats(&[1.0; 4], &[1.0; 4], &m).unwrap(), None);
}

#[test]
fn lattice_mask_area_tracks_porosity() {
    // Rotated lattices only: with struts parallel to the grid, thresholding
    // rounds every strut to a whole number of cells.
    for &(porosity, angle) in &[(0.3, 10.0), (0.5, 20.0), (0.7, 45.0), (0.2, 30.0), (0.8, 5.0), (0.45, 37.0)] {
        let cfg = GeometryConfig {
            porosity,
            angle,
            ..GeometryConfig::lattice()
        };
        let state = build_geometry(&cfg).unwrap();
        let fields = downsample(&derive_fields(&state, &cfg.kind.material_tags()), state.nx, cfg.refine);
        let plane = cfg.grid * cfg.grid;
        let mat = &fields[3 * plane..4 * plane];
        let masks = build_masks(mat, mat, &MaterialBounds::lattice()).unwrap();
        // The lattice occupies the middle half of the domain along x.
        let (c0, c1) = (cfg.grid / 4, 3 * cfg.grid / 4);
        let mut on = 0;
        let mut total = 0;
        for i in 0..cfg.grid {
            for j in c0..c1 {
                on += masks.truth[i * cfg.grid + j] as usize;
                total += 1;
            }
        }
        let area = on as f64 / total as f64;
        assert!(
            (area - (1.0 - porosity)).abs() < 0.02,
            "porosity {porosity} angle {angle}: mask area {area}"
        );
    }
}

fn row(sample: usize, timestep: usize, field: usize, v: f64) -> FieldRow {
    FieldRow {
        sample,
        timestep,
        field,
        mse: v,
        ssim: 1.0 - v,
        rmse: Some(v.sqrt()),
        r2: None,
        rel_rmse: None,
        truth_mean: Some(v),
        truth_std: Some(0.0),
        pred_mean: Some(v),
        pred_std: Some(0.0),
        diff_mean: Some(0.0),
        diff_std: Some(0.0),
    }
}

#[test]
fn aggregate_single_and_pair() {
    let r = aggregate(vec![row(0, 0, 0, 0.3)], vec![]).unwrap();
    let s = r.aggregate_of("mse", None).unwrap();
    assert_eq!((s.mean, s.std, s.count), (0.3, 0.0, 1));
    assert!(r.aggregate_of("r2", None).is_none());

    let r = aggregate(vec![row(0, 0, 0, 0.2), row(1, 0, 0, 0.5)], vec![]).unwrap();
    let s = r.aggregate_of("mse", None).unwrap();
    assert!(close(s.mean, 0.35, 1e-15) && close(s.std, 0.15, 1e-15));
}

#[test]
fn aggregate_matches_flatten_then_reduce() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    let mut steps = Vec::new();
    for s in 0..3 {
        for t in 0..4 {
            for f in 0..5 {
                rows.push(row(s, t, f, rand::Rng::gen_range(&mut rng, 0.0..1.0)));
            }
            steps.push(StepRow {
                sample: s,
                timestep: t,
                soft_iou: rand::Rng::gen_range(&mut rng, 0.0..1.0),
                cm: rand::Rng::gen_range(&mut rng, 0.0..0.1),
                hard_iou: Some(0.5),
            });
        }
    }
    let report = aggregate(rows.clone(), steps.clone()).unwrap();
    let flat: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    let std = (flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let got = report.aggregate_of("mse", None).unwrap();
    assert_eq!(got.count, 60);
    assert!(close(got.mean, mean, 1e-12) && close(got.std, std, 1e-12));

    // Per-timestep curve at t = 2 over samples and fields.
    let at: Vec<f64> = rows.iter().filter(|r| r.timestep == 2).map(|r| r.mse).collect();
    let m2 = at.iter().sum::<f64>() / at.len() as f64;
    let (_, c) = report.curve("mse", None)[2];
    assert!(close(c.mean, m2, 1e-12));

    let cm: Vec<f64> = steps.iter().map(|s| s.cm).collect();
    let got = report.aggregate_of("cm", None).unwrap();
    assert!(close(got.mean, cm.iter().sum::<f64>() / 12.0, 1e-12));

    // Row order does not change any aggregate.
    rows.reverse();
    steps.reverse();
    let again = aggregate(rows, steps).unwrap();
    assert_eq!(again.aggregates, report.aggregates);
}

fn synthetic_sequence(seed: u64) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = FrameShape::new(NUM_FIELDS, 12, 12);
    let frames = (0..8)
        .map(|_| {
            FieldFrame::from_fn(shape, |f, _, _| {
                let v: f32 = rand::Rng::gen_range(&mut rng, 0.0..1.0);
                if f == 0 {
                    1.0 + v
                } else {
                    v
                }
            })
        })
        .collect();
    Sequence::new(frames, vec![("seed".into(), seed as f64)], 0.1).unwrap()
}

fn unit_stats() -> NormStats {
    NormStats::new(
        (0..NUM_FIELDS)
            .map(|f| if f == 0 { FieldRange { min: 1.0, max: 2.0 } } else { FieldRange { min: 0.0, max: 1.0 } })
            .collect(),
    )
}

#[test]
fn evaluating_truth_against_itself() {
    let seqs = vec![synthetic_sequence(1), synthetic_sequence(2)];
    let report = evaluate(&seqs, &seqs, &unit_stats(), &EvalOptions::new(MaterialBounds::lattice())).unwrap();
    assert_eq!(report.field_rows.len(), 2 * 3 * NUM_FIELDS);
    for r in &report.field_rows {
        assert_eq!(r.mse, 0.0);
        assert!(close(r.ssim, 1.0, 1e-12));
        assert_eq!(r.diff_mean, Some(0.0));
    }
    for s in &report.step_rows {
        assert_eq!((s.soft_iou, s.cm, s.hard_iou), (1.0, 0.0, Some(1.0)));
    }
}

#[test]
fn evaluation_rejects_misaligned_pairs() {
    let truth = vec![synthetic_sequence(1), synthetic_sequence(2)];
    let pred = vec![synthetic_sequence(1), synthetic_sequence(3)];
    let err = evaluate(&truth, &pred, &unit_stats(), &EvalOptions::new(MaterialBounds::lattice())).unwrap_err();
    assert_eq!(err, MetricError::Misaligned(vec![1]));
}

#[test]
fn csv_means_recompute() {
    let truth = vec![synthetic_sequence(4)];
    let pred = vec![Sequence::new(
        synthetic_sequence(5).frames,
        truth[0].params.clone(),
        0.1,
    )
    .unwrap()];
    let report = evaluate(&truth, &pred, &unit_stats(), &EvalOptions::new(MaterialBounds::lattice())).unwrap();
    let csv = report.rows_csv();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "mse").unwrap();
    let vals: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!(close(mean, report.aggregate_of("mse", None).unwrap().mean, 1e-12));
    assert!(report.summary_json().contains("\"metric\": \"mse\""));
}

proptest! {
    #[test]
    fn symmetric_metrics_and_ranges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = oracle::random_instance(&mut rng, 8);
        let b = MaterialBounds::lattice();
        prop_assert_eq!(mse_metric(&x.pred, &x.truth, None).unwrap(), mse_metric(&x.truth, &x.pred, None).unwrap());
        let s1 = ssim(&x.pred, &x.truth, 1.0).unwrap();
        let s2 = ssim(&x.truth, &x.pred, 1.0).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-15);
        prop_assert!((-1.0..=1.0).contains(&s1));
        let iou = soft_iou(&x.mat_pred, &x.mat_truth, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&iou));
        let m = build_masks(&x.mat_truth, &x.mat_pred, &b).unwrap();
        if let Some(s) = samplewise_stats(&x.pred, &x.truth, &m).unwrap() {
            prop_assert!((0.0..=1.0).contains(&s.iou));
        }
    }

    #[test]
    fn ssim_never_exceeds_one(a in proptest::collection::vec(-2.0f64..2.0, 16), b in proptest::collection::vec(-2.0f64..2.0, 16)) {
        prop_assert!(ssim(&a, &b, 1.0).unwrap() <= 1.0 + 1e-12);
    }
}
