//! Initial conditions for the two target families: a porous slab with
//! randomly placed circular voids and a rotated square lattice of struts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::solver::{Boundaries, EdgeCondition};
use super::state::{ConservedState, Material, Primitive, NUM_MATERIALS};
use super::HydroError;
use crate::config::{ConfigError, KeyValues};

/// Flier plate thickness (cm).
pub const FLIER_THICKNESS: f64 = 0.3175;
/// Gas gap between the porous-case wall and the flier (cm).
pub const POROUS_GAP: f64 = 0.05;
/// Downstream backer thickness in the porous case (cm).
pub const POROUS_BACKER: f64 = 0.3;
/// Lattice-case layout: flier, lattice and backer widths (cm).
pub const LATTICE_FLIER: f64 = 0.3;
pub const LATTICE_WIDTH: f64 = 0.6;
pub const LATTICE_BACKER: f64 = 0.3;
/// Void and ambient gas density relative to the solid.
pub const AMBIENT_DENSITY_RATIO: f64 = 1e-3;
/// Minimum strut width in internal cells.
pub const MIN_STRUT_CELLS: f64 = 2.0;
/// Minimum number of target cells needed to hit porosity within 1%.
pub const MIN_TARGET_CELLS: usize = 50;

const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryKind {
    Porous,
    Lattice,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Porous => "porous",
            GeometryKind::Lattice => "lattice",
        }
    }

    /// Frames recorded per simulation.
    pub fn frames(self) -> usize {
        match self {
            GeometryKind::Porous => 60,
            GeometryKind::Lattice => 50,
        }
    }

    pub fn porosity_range(self) -> (f64, f64) {
        match self {
            GeometryKind::Porous => (0.05, 0.75),
            GeometryKind::Lattice => (0.10, 0.90),
        }
    }

    pub fn boundaries(self) -> Boundaries {
        match self {
            GeometryKind::Porous => Boundaries::closed(),
            GeometryKind::Lattice => Boundaries {
                left: EdgeCondition::Outflow,
                ..Boundaries::closed()
            },
        }
    }

    /// Material tags encoded into the recorded materials field:
    /// (flier, target, backer, ambient gas).
    pub fn material_tags(self) -> MaterialTags {
        match self {
            GeometryKind::Porous => MaterialTags {
                materials: [0.0, 0.25, 1.0],
                ambient: 0.15,
            },
            GeometryKind::Lattice => MaterialTags {
                materials: [0.0, 0.95, 1.0],
                ambient: 0.13,
            },
        }
    }
}

impl std::str::FromStr for GeometryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "porous" => Ok(GeometryKind::Porous),
            "lattice" => Ok(GeometryKind::Lattice),
            other => Err(format!("unknown geometry kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialTags {
    pub materials: [f64; NUM_MATERIALS],
    pub ambient: f64,
}

impl MaterialTags {
    /// Volume-fraction weighted tag of a cell.
    pub fn encode(&self, fractions: &[f64; NUM_MATERIALS]) -> f64 {
        let mut solid = 0.0;
        let mut value = 0.0;
        for (f, tag) in fractions.iter().zip(&self.materials) {
            let f = f.clamp(0.0, 1.0);
            solid += f;
            value += f * tag;
        }
        value + (1.0 - solid).clamp(0.0, 1.0) * self.ambient
    }
}

/// Geometry and loading parameters of one simulation. Lengths in cm,
/// speeds in cm/us, densities in g/cm^3, pressure in Mbar.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub porosity: f64,
    /// Porous target thickness along the impact axis.
    pub thickness: f64,
    /// Porous target diameter; the simulated half-plane holds its radius.
    pub diameter: f64,
    /// Lattice rotation in degrees.
    pub angle: f64,
    pub pitch: f64,
    pub flier_speed: f64,
    pub rho_solid: f64,
    pub gamma: f64,
    pub rng_seed: u64,
    /// Recorded frame resolution (cells per side).
    pub grid: usize,
    /// Internal cells per recorded cell along each axis.
    pub refine: usize,
    pub cfl: f64,
    pub cv: f64,
    pub ambient_pressure: f64,
}

impl GeometryConfig {
    pub fn porous() -> Self {
        Self {
            kind: GeometryKind::Porous,
            porosity: 0.4,
            thickness: 0.5,
            diameter: 1.0,
            angle: 0.0,
            pitch: 0.10,
            flier_speed: 0.23,
            rho_solid: 2.7,
            gamma: 1.4,
            rng_seed: 0,
            grid: 60,
            refine: 4,
            cfl: 0.25,
            cv: 1.0,
            ambient_pressure: 1e-4,
        }
    }

    pub fn lattice() -> Self {
        Self {
            kind: GeometryKind::Lattice,
            porosity: 0.5,
            angle: 0.0,
            flier_speed: 0.25,
            ..Self::porous()
        }
    }

    pub fn internal_cells(&self) -> usize {
        self.grid * self.refine
    }

    /// Side length of the square domain.
    pub fn domain_size(&self) -> f64 {
        match self.kind {
            GeometryKind::Porous => POROUS_GAP + FLIER_THICKNESS + self.thickness + POROUS_BACKER,
            GeometryKind::Lattice => LATTICE_FLIER + LATTICE_WIDTH + LATTICE_BACKER,
        }
    }

    pub fn dx(&self) -> f64 {
        self.domain_size() / self.internal_cells() as f64
    }

    /// Strut width that gives the configured porosity for a square grid:
    /// solid fraction `1 - (1 - w/p)^2`.
    pub fn strut_width(&self) -> f64 {
        self.pitch * (1.0 - self.porosity.clamp(0.0, 1.0).sqrt())
    }

    /// Simulated time span covered by the recorded frames (us).
    pub fn duration(&self) -> f64 {
        if self.flier_speed <= 0.0 {
            return 1.0;
        }
        // Strong-shock speed in the target is roughly 0.6 of the impact speed.
        let distance = match self.kind {
            GeometryKind::Porous => self.thickness + 0.5 * POROUS_BACKER,
            GeometryKind::Lattice => 0.8 * LATTICE_WIDTH,
        };
        distance / (0.6 * self.flier_speed)
    }

    pub fn validate(&self) -> Result<(), HydroError> {
        let bad = |msg: String| Err(HydroError::InvalidConfig(msg));
        let (lo, hi) = self.kind.porosity_range();
        if !(lo..=hi).contains(&self.porosity) {
            return bad(format!(
                "porosity {} outside [{lo}, {hi}] for {}",
                self.porosity,
                self.kind.name()
            ));
        }
        if self.kind == GeometryKind::Porous {
            if !(0.2..=1.0).contains(&self.thickness) {
                return bad(format!("thickness {} outside [0.2, 1.0]", self.thickness));
            }
            if !(0.05..=3.8).contains(&self.diameter) {
                return bad(format!("diameter {} outside [0.05, 3.8]", self.diameter));
            }
        } else if !(0.0..=45.0).contains(&self.angle) {
            return bad(format!("angle {} outside [0, 45]", self.angle));
        }
        if !(0.0..=0.4).contains(&self.flier_speed) {
            return bad(format!("flier speed {} outside [0, 0.4]", self.flier_speed));
        }
        if !(self.pitch > 0.0 && self.rho_solid > 0.0 && self.cv > 0.0 && self.ambient_pressure > 0.0) {
            return bad("pitch, rho_solid, cv and ambient_pressure must be positive".into());
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma {} must exceed 1", self.gamma));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("cfl {} outside (0, 1)", self.cfl));
        }
        if self.grid < 4 || self.refine < 1 {
            return bad(format!("grid {} / refine {} too small", self.grid, self.refine));
        }
        Ok(())
    }

    /// (key, value) metadata stored alongside generated sequences.
    pub fn to_metadata(&self) -> Vec<(String, f64)> {
        let kind = match self.kind {
            GeometryKind::Porous => 0.0,
            GeometryKind::Lattice => 1.0,
        };
        [
            ("kind", kind),
            ("porosity", self.porosity),
            ("thickness", self.thickness),
            ("diameter", self.diameter),
            ("angle", self.angle),
            ("pitch", self.pitch),
            ("flier_speed", self.flier_speed),
            ("rho_solid", self.rho_solid),
            ("gamma", self.gamma),
            ("rng_seed", self.rng_seed as f64),
            ("grid", self.grid as f64),
            ("refine", self.refine as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
    }

    /// Reads a config, starting from the defaults of its `kind`. Keys that
    /// are not consumed are reported as errors by the caller's
    /// [`KeyValues::finish`].
    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self, ConfigError> {
        let kind: GeometryKind = kv.take_or("kind", GeometryKind::Lattice)?;
        let mut cfg = match kind {
            GeometryKind::Porous => Self::porous(),
            GeometryKind::Lattice => Self::lattice(),
        };
        cfg.porosity = kv.take_or("porosity", cfg.porosity)?;
        cfg.thickness = kv.take_or("thickness", cfg.thickness)?;
        cfg.diameter = kv.take_or("diameter", cfg.diameter)?;
        cfg.angle = kv.take_or("angle", cfg.angle)?;
        cfg.pitch = kv.take_or("pitch", cfg.pitch)?;
        cfg.flier_speed = kv.take_or("flier_speed", cfg.flier_speed)?;
        cfg.rho_solid = kv.take_or("rho_solid", cfg.rho_solid)?;
        cfg.gamma = kv.take_or("gamma", cfg.gamma)?;
        cfg.rng_seed = kv.take_or("rng_seed", cfg.rng_seed)?;
        cfg.grid = kv.take_or("grid", cfg.grid)?;
        cfg.refine = kv.take_or("refine", cfg.refine)?;
        cfg.cfl = kv.take_or("cfl", cfg.cfl)?;
        cfg.cv = kv.take_or("cv", cfg.cv)?;
        cfg.ambient_pressure = kv.take_or("ambient_pressure", cfg.ambient_pressure)?;
        Ok(cfg)
    }
}

/// Builds the initial state of a validated configuration.
pub fn build_geometry(cfg: &GeometryConfig) -> Result<ConservedState, HydroError> {
    cfg.validate()?;
    let layout = match cfg.kind {
        GeometryKind::Porous => porous_layout(cfg)?,
        GeometryKind::Lattice => lattice_layout(cfg)?,
    };
    let n = cfg.internal_cells();
    let rho_gas = AMBIENT_DENSITY_RATIO * cfg.rho_solid;
    Ok(ConservedState::from_fn(n, n, cfg.dx(), cfg.gamma, cfg.cv, |ix, iy| {
        let cell = &layout[iy * n + ix];
        let solid: f64 = cell.fractions.iter().sum();
        Primitive {
            rho: solid * cfg.rho_solid + (1.0 - solid) * rho_gas,
            u: cell.u,
            v: 0.0,
            p: cfg.ambient_pressure,
            fractions: cell.fractions,
        }
    }))
}

#[derive(Clone, Copy, Default)]
struct CellInit {
    fractions: [f64; NUM_MATERIALS],
    u: f64,
}

fn solid(material: Material, u: f64) -> CellInit {
    let mut fractions = [0.0; NUM_MATERIALS];
    fractions[material as usize] = 1.0;
    CellInit { fractions, u }
}

fn porous_layout(cfg: &GeometryConfig) -> Result<Vec<CellInit>, HydroError> {
    let n = cfg.internal_cells();
    let dx = cfg.dx();
    let flier_start = POROUS_GAP;
    let target_start = POROUS_GAP + FLIER_THICKNESS;
    let target_end = target_start + cfg.thickness;
    let radius = 0.5 * cfg.diameter;

    let mut cells = vec![CellInit::default(); n * n];
    let mut target = Vec::new();
    for iy in 0..n {
        let y = (iy as f64 + 0.5) * dx;
        for ix in 0..n {
            let x = (ix as f64 + 0.5) * dx;
            cells[iy * n + ix] = if x < flier_start {
                CellInit {
                    u: cfg.flier_speed,
                    ..CellInit::default()
                }
            } else if x < target_start {
                solid(Material::Flier, cfg.flier_speed)
            } else if x < target_end && y < radius {
                target.push(iy * n + ix);
                solid(Material::Target, 0.0)
            } else {
                solid(Material::Backer, 0.0)
            };
        }
    }
    if target.len() < MIN_TARGET_CELLS {
        return Err(HydroError::InvalidConfig(format!(
            "porous target resolves to {} cells, need at least {MIN_TARGET_CELLS}",
            target.len()
        )));
    }

    let mut void = vec![false; n * n];
    let goal = (cfg.porosity * target.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let (x0, x1) = (target_start, target_end.min(n as f64 * dx));
    let y1 = radius.min(n as f64 * dx);
    let mut count = 0;
    let mut attempts = 0;
    while count < goal {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(HydroError::InvalidConfig("void placement did not converge".into()));
        }
        let deficit = (goal - count) as f64;
        let max_r = (deficit / std::f64::consts::PI).sqrt() * dx;
        let r = rng.gen_range(0.01..0.03f64).min(max_r);
        let (cx, cy) = (rng.gen_range(x0..x1), rng.gen_range(0.0..y1));
        if r < 0.75 * dx {
            // Single-cell void at the cell containing the centre.
            let (ix, iy) = ((cx / dx) as usize, (cy / dx) as usize);
            let idx = iy.min(n - 1) * n + ix.min(n - 1);
            if cells[idx].fractions[Material::Target as usize] == 1.0 && !void[idx] {
                void[idx] = true;
                count += 1;
            }
            continue;
        }
        let reach = (r / dx).ceil() as isize + 1;
        let (cix, ciy) = ((cx / dx) as isize, (cy / dx) as isize);
        for iy in (ciy - reach).max(0)..(ciy + reach + 1).min(n as isize) {
            for ix in (cix - reach).max(0)..(cix + reach + 1).min(n as isize) {
                let idx = iy as usize * n + ix as usize;
                if void[idx] || cells[idx].fractions[Material::Target as usize] != 1.0 {
                    continue;
                }
                let (x, y) = ((ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dx);
                if (x - cx).powi(2) + (y - cy).powi(2) <= r * r && count < goal {
                    void[idx] = true;
                    count += 1;
                }
            }
        }
    }
    for (idx, is_void) in void.iter().enumerate() {
        if *is_void {
            cells[idx] = CellInit::default();
        }
    }
    Ok(cells)
}

fn lattice_layout(cfg: &GeometryConfig) -> Result<Vec<CellInit>, HydroError> {
    let n = cfg.internal_cells();
    let dx = cfg.dx();
    let width = cfg.strut_width();
    if width < MIN_STRUT_CELLS * dx {
        return Err(HydroError::UnresolvableLattice {
            strut_cells: width / dx,
        });
    }
    let (sin, cos) = cfg.angle.to_radians().sin_cos();
    let lattice_start = LATTICE_FLIER;
    let lattice_end = LATTICE_FLIER + LATTICE_WIDTH;
    let pitch = cfg.pitch;
    let in_strut = |x: f64, y: f64| {
        // Rotate about the lattice origin into strut-aligned coordinates.
        let (rx, ry) = (x - lattice_start, y);
        let a = cos * rx + sin * ry;
        let b = -sin * rx + cos * ry;
        a.rem_euclid(pitch) < width || b.rem_euclid(pitch) < width
    };

    let mut cells = vec![CellInit::default(); n * n];
    let sub = SUPERSAMPLE as f64;
    for iy in 0..n {
        for ix in 0..n {
            let xc = (ix as f64 + 0.5) * dx;
            cells[iy * n + ix] = if xc < lattice_start {
                solid(Material::Flier, cfg.flier_speed)
            } else if xc >= lattice_end {
                solid(Material::Backer, 0.0)
            } else {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let x = (ix as f64 + (sx as f64 + 0.5) / sub) * dx;
                        let y = (iy as f64 + (sy as f64 + 0.5) / sub) * dx;
                        hits += in_strut(x, y) as usize;
                    }
                }
                let mut fractions = [0.0; NUM_MATERIALS];
                fractions[Material::Target as usize] = hits as f64 / (sub * sub);
                CellInit { fractions, u: 0.0 }
            };
        }
    }
    Ok(cells)
}

/// Cells (internal indices) covered by the target region, used by
/// porosity checks.
pub fn target_region(cfg: &GeometryConfig) -> Vec<(usize, usize)> {
    let n = cfg.internal_cells();
    let dx = cfg.dx();
    let (x0, x1, y1) = match cfg.kind {
        GeometryKind::Porous => {
            let start = POROUS_GAP + FLIER_THICKNESS;
            (start, start + cfg.thickness, 0.5 * cfg.diameter)
        }
        GeometryKind::Lattice => (LATTICE_FLIER, LATTICE_FLIER + LATTICE_WIDTH, f64::INFINITY),
    };
    let mut out = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = ((ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dx);
            if x >= x0 && x < x1 && y < y1 {
                out.push((ix, iy));
            }
        }
    }
    out
}
