//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod metric_oracle;
pub mod nn_oracle;
pub mod riemann;

use mstm_core::hydro::{compute_dt, Boundaries, ConservedState, Primitive, Solver};
use riemann::{cell_averaged_density, SOD_LEFT, SOD_RIGHT};

/// Runs the Sod problem on `n` cells along the tube (4 across) to t = 0.2
/// and returns the L1 density error against the exact solution. With
/// `along_y` the tube runs along the y axis.
pub fn sod_l1(n: usize, along_y: bool) -> f64 {
    let (nx, ny) = if along_y { (4, n) } else { (n, 4) };
    let dx = 1.0 / n as f64;
    let mut state = ConservedState::from_fn(nx, ny, dx, 1.4, 1.0, |ix, iy| {
        let i = if along_y { iy } else { ix };
        if (i as f64 + 0.5) * dx < 0.5 {
            Primitive::at_rest(SOD_LEFT.rho, SOD_LEFT.p)
        } else {
            Primitive::at_rest(SOD_RIGHT.rho, SOD_RIGHT.p)
        }
    });
    let mut solver = Solver::new(Boundaries::closed());
    let t_end = 0.2;
    let mut t = 0.0;
    while t < t_end {
        let dt = compute_dt(&state, 0.4).unwrap().min(t_end - t);
        let taken = solver.step_with_retry(&mut state, dt).unwrap();
        t += taken;
    }
    let exact = cell_averaged_density(&SOD_LEFT, &SOD_RIGHT, 1.4, t_end, n, 16);
    let mut l1 = 0.0;
    for (i, e) in exact.iter().enumerate() {
        for j in 0..4 {
            let (ix, iy) = if along_y { (j, i) } else { (i, j) };
            l1 += (state.cell(ix, iy)[0] - e).abs();
        }
    }
    l1 * dx / 4.0
}

/// Smooth travelling-wave frames with all seven fields, for training tests
/// that need no solver run.
pub fn wave_sequence(seed: u64, h: usize, w: usize, len: usize) -> mstm_core::field::Sequence {
    use mstm_core::field::{FieldFrame, FrameShape, Sequence, NUM_FIELDS};
    let phase = seed as f32 * 0.37;
    let shape = FrameShape::new(NUM_FIELDS, h, w);
    let frames = (0..len)
        .map(|t| {
            FieldFrame::from_fn(shape, |f, i, j| {
                let x = j as f32 / w as f32 + 0.05 * t as f32 + phase;
                let y = i as f32 / h as f32;
                let base = (6.0 * x + f as f32).sin() * (3.0 * y + 0.5 * f as f32).cos();
                1.0 + f as f32 + 0.5 * base
            })
        })
        .collect();
    Sequence::new(frames, vec![("seed".into(), seed as f64)], 0.1).unwrap()
}

pub fn tiny_model(h: usize, w: usize) -> mstm_core::nn::ModelConfig {
    mstm_core::nn::ModelConfig {
        fields: mstm_core::field::NUM_FIELDS,
        height: h,
        width: w,
        window: 5,
        conv1_out: 4,
        conv2_out: 4,
        kernel: 3,
        lstm_hidden: 8,
        lstm_layers: 1,
    }
}
