//! Planar 2D compressible-Euler solver used to generate training sequences.
//!
//! Units: cm, us, g/cm^3, Mbar. Ideal-gas EOS with a single ratio of specific
//! heats; material identity is carried by passive volume-fraction tracers.

pub mod geometry;
pub mod simulate;
pub mod solver;
pub mod state;

use thiserror::Error;

pub use geometry::{build_geometry, GeometryConfig, GeometryKind, MaterialTags};
pub use simulate::{derive_fields, downsample, generate_dataset, run_simulation, run_simulation_with, sequence_seeds, Preset, TOY_GRID};
pub use solver::{apply_boundary, compute_dt, Boundaries, EdgeCondition, Solver};
pub use state::{eos_pressure, porosity_of, sound_speed, ConservedState, Material, Primitive};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unresolvable lattice: strut width is {strut_cells:.2} cells, need at least 2")]
    UnresolvableLattice { strut_cells: f64 },
    #[error("non-finite wave speed at cell ({ix}, {iy})")]
    NonFiniteWaveSpeed { ix: usize, iy: usize },
    #[error("positivity failure at cell ({ix}, {iy}): rho={rho:e}, p={p:e}")]
    Positivity { ix: usize, iy: usize, rho: f64, p: f64 },
    #[error("simulation aborted at t={time:.6} us before frame {frame}: {cause}")]
    Aborted {
        time: f64,
        frame: usize,
        cause: Box<HydroError>,
    },
}
