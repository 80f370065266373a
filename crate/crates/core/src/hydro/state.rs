//! Conserved variables on a uniform Cartesian grid with one ghost layer.

use super::HydroError;

/// Number of passively advected materials (flier, target, backer).
pub const NUM_MATERIALS: usize = 3;

/// Conserved variables per cell: density, x/y momentum, total energy, then
/// density times the volume fraction of each material.
pub const NUM_VARS: usize = 4 + NUM_MATERIALS;

pub type Cons = [f64; NUM_VARS];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum Material {
    Flier = 0,
    Target = 1,
    Backer = 2,
}

impl Material {
    pub const ALL: [Material; NUM_MATERIALS] = [Material::Flier, Material::Target, Material::Backer];
}

/// Ideal-gas pressure from the internal energy per unit volume.
pub fn eos_pressure(gamma: f64, _rho: f64, internal_energy_density: f64) -> f64 {
    (gamma - 1.0) * internal_energy_density
}

pub fn sound_speed(gamma: f64, rho: f64, pressure: f64) -> f64 {
    (gamma * pressure / rho).sqrt()
}

/// `phi = 1 - rho / rho_solid`, with `rho` clamped to `[0, rho_solid]`.
pub fn porosity_of(rho: f64, rho_solid: f64) -> f64 {
    1.0 - rho.clamp(0.0, rho_solid) / rho_solid
}

/// Primitive view of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    /// Volume fraction of each material; the remainder is ambient gas.
    pub fractions: [f64; NUM_MATERIALS],
}

impl Primitive {
    pub fn at_rest(rho: f64, p: f64) -> Self {
        Self {
            rho,
            u: 0.0,
            v: 0.0,
            p,
            fractions: [0.0; NUM_MATERIALS],
        }
    }

    pub fn to_cons(&self, gamma: f64) -> Cons {
        let kinetic = 0.5 * self.rho * (self.u * self.u + self.v * self.v);
        let mut q = [0.0; NUM_VARS];
        q[0] = self.rho;
        q[1] = self.rho * self.u;
        q[2] = self.rho * self.v;
        q[3] = self.p / (gamma - 1.0) + kinetic;
        for (k, f) in self.fractions.iter().enumerate() {
            q[4 + k] = self.rho * f;
        }
        q
    }

    pub fn from_cons(q: &Cons, gamma: f64) -> Self {
        let rho = q[0];
        let u = q[1] / rho;
        let v = q[2] / rho;
        let internal = q[3] - 0.5 * (q[1] * u + q[2] * v);
        let mut fractions = [0.0; NUM_MATERIALS];
        for (k, f) in fractions.iter_mut().enumerate() {
            *f = q[4 + k] / rho;
        }
        Self {
            rho,
            u,
            v,
            p: eos_pressure(gamma, rho, internal),
            fractions,
        }
    }
}

/// Solver state. Cells are stored row-major over `(ny + 2) x (nx + 2)` with
/// a one-cell ghost frame; interior cell `(ix, iy)` lives at padded
/// `(ix + 1, iy + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservedState {
    pub nx: usize,
    pub ny: usize,
    /// Cell size; cells are square.
    pub dx: f64,
    pub gamma: f64,
    /// Specific heat used to report temperature as `e / cv`.
    pub cv: f64,
    pub cells: Vec<Cons>,
}

impl ConservedState {
    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        gamma: f64,
        cv: f64,
        mut init: impl FnMut(usize, usize) -> Primitive,
    ) -> Self {
        let mut cells = vec![[0.0; NUM_VARS]; (nx + 2) * (ny + 2)];
        for iy in 0..ny {
            for ix in 0..nx {
                cells[(iy + 1) * (nx + 2) + ix + 1] = init(ix, iy).to_cons(gamma);
            }
        }
        Self {
            nx,
            ny,
            dx,
            gamma,
            cv,
            cells,
        }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.nx + 2
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        (iy + 1) * self.stride() + ix + 1
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &Cons {
        &self.cells[self.index(ix, iy)]
    }

    pub fn primitive(&self, ix: usize, iy: usize) -> Primitive {
        Primitive::from_cons(self.cell(ix, iy), self.gamma)
    }

    pub fn interior(&self) -> impl Iterator<Item = &Cons> + '_ {
        (0..self.ny).flat_map(move |iy| {
            let start = self.index(0, iy);
            self.cells[start..start + self.nx].iter()
        })
    }

    /// Sum of one conserved component over interior cells, times cell area.
    pub fn total(&self, var: usize) -> f64 {
        self.interior().map(|q| q[var]).sum::<f64>() * self.dx * self.dx
    }

    pub fn total_mass(&self) -> f64 {
        self.total(0)
    }

    pub fn total_energy(&self) -> f64 {
        self.total(3)
    }

    /// Target-material volume fraction of an interior cell.
    pub fn mat(&self, ix: usize, iy: usize) -> f64 {
        let q = self.cell(ix, iy);
        q[4 + Material::Target as usize] / q[0]
    }

    pub fn check_physical(&self) -> Result<(), HydroError> {
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let prim = self.primitive(ix, iy);
                if !(prim.rho > 0.0) || !(prim.p >= 0.0) || !prim.u.is_finite() || !prim.v.is_finite() {
                    return Err(HydroError::Positivity {
                        ix,
                        iy,
                        rho: prim.rho,
                        p: prim.p,
                    });
                }
            }
        }
        Ok(())
    }
}
