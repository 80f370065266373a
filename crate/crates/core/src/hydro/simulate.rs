//! Time loop, frame recording and dataset generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{build_geometry, GeometryConfig, GeometryKind, MaterialTags};
use super::solver::{compute_dt, Solver};
use super::state::{ConservedState, NUM_MATERIALS};
use super::HydroError;
use crate::field::{FieldFrame, FrameShape, Sequence, NUM_FIELDS};

/// Per-cell recorded fields at solver resolution, field-major
/// `[field][iy][ix]`.
pub fn derive_fields(state: &ConservedState, tags: &MaterialTags) -> Vec<f64> {
    let (nx, ny) = (state.nx, state.ny);
    let plane = nx * ny;
    let mut out = vec![0.0; NUM_FIELDS * plane];
    for iy in 0..ny {
        for ix in 0..nx {
            let q = state.cell(ix, iy);
            let prim = state.primitive(ix, iy);
            let specific_internal = (q[3] - 0.5 * prim.rho * (prim.u * prim.u + prim.v * prim.v)) / prim.rho;
            let mut fractions = [0.0; NUM_MATERIALS];
            for (k, f) in fractions.iter_mut().enumerate() {
                *f = q[4 + k] / q[0];
            }
            let values = [
                prim.rho,
                prim.u,
                prim.v,
                tags.encode(&fractions),
                prim.p,
                q[3],
                specific_internal / state.cv,
            ];
            let c = iy * nx + ix;
            for (k, v) in values.into_iter().enumerate() {
                out[k * plane + c] = v;
            }
        }
    }
    out
}

/// Block-averages a field-major `[fields][n][n]` array by `factor` along
/// each axis.
pub fn downsample(values: &[f64], n: usize, factor: usize) -> Vec<f64> {
    assert!(factor >= 1 && n % factor == 0, "grid {n} not divisible by {factor}");
    let plane = n * n;
    assert_eq!(values.len() % plane, 0);
    let m = n / factor;
    let scale = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(values.len() / (factor * factor));
    for field in values.chunks_exact(plane) {
        for by in 0..m {
            for bx in 0..m {
                let mut sum = 0.0;
                for y in by * factor..(by + 1) * factor {
                    sum += field[y * n + bx * factor..y * n + (bx + 1) * factor].iter().sum::<f64>();
                }
                out.push(sum * scale);
            }
        }
    }
    out
}

fn record(state: &ConservedState, cfg: &GeometryConfig, tags: &MaterialTags) -> FieldFrame {
    let values = downsample(&derive_fields(state, tags), state.nx, cfg.refine);
    let shape = FrameShape::new(NUM_FIELDS, cfg.grid, cfg.grid);
    FieldFrame::new(shape, values.into_iter().map(|v| v as f32).collect())
        .expect("downsampled frame matches its shape")
}

/// Runs one simulation and records `cfg.kind.frames()` frames at uniform
/// intervals, frame 0 being the initial condition.
pub fn run_simulation(cfg: &GeometryConfig) -> Result<Sequence, HydroError> {
    run_simulation_with(cfg, |_, _| {})
}

/// Like [`run_simulation`], calling `observe(frame_index, state)` at every
/// recorded frame with the full-resolution state.
pub fn run_simulation_with(
    cfg: &GeometryConfig,
    mut observe: impl FnMut(usize, &ConservedState),
) -> Result<Sequence, HydroError> {
    let mut state = build_geometry(cfg)?;
    let tags = cfg.kind.material_tags();
    let mut solver = Solver::new(cfg.kind.boundaries());
    let frames = cfg.kind.frames();
    let interval = cfg.duration() / (frames - 1) as f64;

    let mut recorded = Vec::with_capacity(frames);
    observe(0, &state);
    recorded.push(record(&state, cfg, &tags));
    let mut time = 0.0;
    for frame in 1..frames {
        let target = frame as f64 * interval;
        while time < target {
            let abort = |cause: HydroError| HydroError::Aborted {
                time,
                frame,
                cause: Box::new(cause),
            };
            let stable = compute_dt(&state, cfg.cfl).map_err(abort)?;
            let remaining = target - time;
            // Split the last two steps evenly to avoid a sliver step.
            let dt = if remaining <= stable {
                remaining
            } else if remaining < 2.0 * stable {
                0.5 * remaining
            } else {
                stable
            };
            let taken = solver.step_with_retry(&mut state, dt).map_err(abort)?;
            time = if taken == remaining { target } else { time + taken };
        }
        observe(frame, &state);
        recorded.push(record(&state, cfg, &tags));
    }
    Ok(Sequence::new(recorded, cfg.to_metadata(), interval as f32).expect("frames share one shape"))
}

/// Named parameter distributions for dataset generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Porous,
    Lattice,
    /// Coarse lattice runs small enough for end-to-end training on a laptop.
    LatticeToy,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Porous => "porous",
            Preset::Lattice => "lattice",
            Preset::LatticeToy => "lattice-toy",
        }
    }

    /// Draws one configuration. Every parameter comes from a generator
    /// seeded by `seed` alone, so a dataset can be built in any order.
    pub fn sample(self, seed: u64) -> GeometryConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Preset::Porous => GeometryConfig {
                porosity: rng.gen_range(0.05..=0.75),
                thickness: rng.gen_range(0.2..=1.0),
                diameter: rng.gen_range(0.05..=3.8),
                flier_speed: 0.23,
                rng_seed: rng.gen(),
                ..GeometryConfig::porous()
            },
            Preset::Lattice => GeometryConfig {
                // Strut width must stay at least two solver cells.
                porosity: rng.gen_range(0.10..=0.80),
                angle: rng.gen_range(0.0..=45.0),
                flier_speed: rng.gen_range(0.1..=0.4),
                ..GeometryConfig::lattice()
            },
            Preset::LatticeToy => GeometryConfig {
                porosity: rng.gen_range(0.20..=0.45),
                angle: rng.gen_range(0.0..=45.0),
                flier_speed: rng.gen_range(0.1..=0.4),
                grid: TOY_GRID,
                ..GeometryConfig::lattice()
            },
        }
    }
}

/// Recorded resolution of the `lattice-toy` preset.
pub const TOY_GRID: usize = 24;

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "porous" => Ok(Preset::Porous),
            "lattice" => Ok(Preset::Lattice),
            "lattice-toy" => Ok(Preset::LatticeToy),
            other => Err(format!("unknown preset `{other}` (porous, lattice, lattice-toy)")),
        }
    }
}

impl From<GeometryKind> for Preset {
    fn from(kind: GeometryKind) -> Self {
        match kind {
            GeometryKind::Porous => Preset::Porous,
            GeometryKind::Lattice => Preset::Lattice,
        }
    }
}

/// Per-sequence seeds derived from a dataset seed.
pub fn sequence_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen()).collect()
}

/// Runs every configuration on a pool of `threads` workers. Results are in
/// input order and do not depend on the worker count.
pub fn generate_dataset(
    configs: &[GeometryConfig],
    threads: usize,
) -> Vec<Result<Sequence, HydroError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| configs.par_iter().map(run_simulation).collect())
}
