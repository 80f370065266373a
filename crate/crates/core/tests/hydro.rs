mod common;

use common::riemann::{sample, star, SOD_LEFT, SOD_RIGHT};
use common::sod_l1;
use mstm_core::hydro::{
    build_geometry, compute_dt, run_simulation, run_simulation_with, Boundaries, ConservedState,
    GeometryConfig, Primitive, Solver,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn riemann_oracle_reproduces_textbook_sod_star_state() {
    let (p, u) = star(&SOD_LEFT, &SOD_RIGHT, 1.4);
    assert!((p - 0.30313).abs() < 1e-5, "p* = {p}");
    assert!((u - 0.92745).abs() < 1e-5, "u* = {u}");
    let left_star = sample(&SOD_LEFT, &SOD_RIGHT, 1.4, u - 1e-9);
    let right_star = sample(&SOD_LEFT, &SOD_RIGHT, 1.4, u + 1e-9);
    assert!((left_star.rho - 0.42632).abs() < 1e-5);
    assert!((right_star.rho - 0.26557).abs() < 1e-5);
}

#[test]
fn sod_density_l1_below_threshold() {
    let l1 = sod_l1(400, false);
    assert!(l1 < 0.02, "L1 = {l1}");
}

#[test]
fn sod_is_axis_symmetric() {
    assert!((sod_l1(100, false) - sod_l1(100, true)).abs() < 1e-13);
}

#[test]
fn sod_error_drops_under_refinement() {
    let coarse = sod_l1(100, false);
    let fine = sod_l1(200, false);
    assert!(coarse / fine >= 1.5, "coarse {coarse} fine {fine}");
}

fn random_box(seed: u64, n: usize) -> ConservedState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConservedState::from_fn(n, n, 1.0 / n as f64, 1.4, 1.0, |_, _| {
        let mut p = Primitive {
            rho: rng.gen_range(0.5..2.0),
            u: rng.gen_range(-0.5..0.5),
            v: rng.gen_range(-0.5..0.5),
            p: rng.gen_range(0.5..2.0),
            fractions: [0.0; 3],
        };
        p.fractions[1] = rng.gen_range(0.0..1.0);
        p
    })
}

#[test]
fn closed_box_conserves_mass_and_energy_over_1000_steps() {
    let mut state = random_box(7, 24);
    let (m0, e0) = (state.total_mass(), state.total_energy());
    let tracer0 = state.total(5);
    let mut solver = Solver::new(Boundaries::closed());
    for _ in 0..1000 {
        let dt = compute_dt(&state, 0.25).unwrap();
        solver.step_with_retry(&mut state, dt).unwrap();
    }
    assert!(((state.total_mass() - m0) / m0).abs() < 1e-10);
    assert!(((state.total_energy() - e0) / e0).abs() < 1e-10);
    assert!(((state.total(5) - tracer0) / tracer0).abs() < 1e-10);
}

#[test]
fn mirror_symmetric_box_keeps_zero_momentum() {
    // Wall forces cancel pairwise when the state is symmetric about both axes.
    let n = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let quarter: Vec<Primitive> = (0..n * n / 4)
        .map(|_| Primitive {
            rho: rng.gen_range(0.5..2.0),
            u: rng.gen_range(-0.5..0.5),
            v: rng.gen_range(-0.5..0.5),
            p: rng.gen_range(0.5..2.0),
            fractions: [0.0; 3],
        })
        .collect();
    let h = n / 2;
    let mut state = ConservedState::from_fn(n, n, 0.05, 1.4, 1.0, |ix, iy| {
        let (qx, flip_x) = if ix < h { (ix, false) } else { (n - 1 - ix, true) };
        let (qy, flip_y) = if iy < h { (iy, false) } else { (n - 1 - iy, true) };
        let mut p = quarter[qy * h + qx];
        if flip_x {
            p.u = -p.u;
        }
        if flip_y {
            p.v = -p.v;
        }
        p
    });
    let scale: f64 = state.interior().map(|q| q[1].abs() + q[2].abs()).sum::<f64>() * 0.05 * 0.05;
    let mut solver = Solver::new(Boundaries::closed());
    for _ in 0..1000 {
        let dt = compute_dt(&state, 0.25).unwrap();
        solver.step_with_retry(&mut state, dt).unwrap();
    }
    assert!(state.total(1).abs() / scale < 1e-10);
    assert!(state.total(2).abs() / scale < 1e-10);
}

#[test]
fn static_flier_leaves_frames_unchanged() {
    for base in [GeometryConfig::lattice(), GeometryConfig::porous()] {
        let cfg = GeometryConfig {
            flier_speed: 0.0,
            grid: 30,
            refine: 2,
            porosity: 0.3,
            pitch: 0.2,
            ..base
        };
        let seq = run_simulation(&cfg).unwrap();
        let first = &seq.frames[0];
        for frame in &seq.frames[1..] {
            for (a, b) in first.data().iter().zip(frame.data()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn frame_mean_density_matches_solver_grid() {
    let cfg = GeometryConfig {
        grid: 20,
        refine: 4,
        pitch: 0.2,
        porosity: 0.4,
        angle: 30.0,
        ..GeometryConfig::lattice()
    };
    let mut fine_means = Vec::new();
    let seq = run_simulation_with(&cfg, |_, state| {
        let n = (state.nx * state.ny) as f64;
        fine_means.push(state.interior().map(|q| q[0]).sum::<f64>() / n);
    })
    .unwrap();
    assert_eq!(fine_means.len(), seq.len());
    for (frame, fine) in seq.frames.iter().zip(&fine_means) {
        let rho = frame.field(0);
        let coarse = rho.iter().map(|&v| v as f64).sum::<f64>() / rho.len() as f64;
        // Frames are stored in single precision.
        assert!((coarse - fine).abs() / fine < 1e-6);
    }
}

#[test]
fn materials_stay_bounded_during_impact() {
    let cfg = GeometryConfig {
        grid: 24,
        refine: 2,
        pitch: 0.2,
        porosity: 0.4,
        flier_speed: 0.4,
        ..GeometryConfig::lattice()
    };
    run_simulation_with(&cfg, |_, state| {
        for iy in 0..state.ny {
            for ix in 0..state.nx {
                let m = state.mat(ix, iy);
                assert!((-1e-12..=1.0 + 1e-12).contains(&m));
                assert!(state.cell(ix, iy)[0] > 0.0);
            }
        }
    })
    .unwrap();
}

#[test]
fn porous_build_is_deterministic_per_seed() {
    let cfg = GeometryConfig {
        rng_seed: 5,
        porosity: 0.5,
        ..GeometryConfig::porous()
    };
    assert_eq!(build_geometry(&cfg).unwrap(), build_geometry(&cfg).unwrap());
}
