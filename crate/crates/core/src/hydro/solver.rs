//! Finite-volume update: HLLC fluxes on piecewise-constant states, Heun
//! (two-stage RK2) time stepping, ghost-cell boundary conditions and the CFL
//! time-step bound.

use super::state::{Cons, ConservedState, NUM_MATERIALS, NUM_VARS};
use super::HydroError;

/// Halvings attempted after a positivity failure before giving up.
pub const MAX_DT_HALVINGS: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeCondition {
    /// No-flux wall: ghost mirrors the interior with the normal momentum negated.
    Reflective,
    /// Zero-gradient: ghost copies the adjacent interior cell.
    Outflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Boundaries {
    pub left: EdgeCondition,
    pub right: EdgeCondition,
    pub bottom: EdgeCondition,
    pub top: EdgeCondition,
}

impl Boundaries {
    pub const fn closed() -> Self {
        Self::uniform(EdgeCondition::Reflective)
    }

    pub const fn uniform(edge: EdgeCondition) -> Self {
        Self {
            left: edge,
            right: edge,
            bottom: edge,
            top: edge,
        }
    }
}

fn ghost(interior: &Cons, edge: EdgeCondition, normal: usize) -> Cons {
    let mut q = *interior;
    if edge == EdgeCondition::Reflective {
        q[normal] = -q[normal];
    }
    q
}

/// Fills the ghost frame from the interior according to `bc`.
pub fn apply_boundary(state: &mut ConservedState, bc: &Boundaries) {
    let (nx, ny, s) = (state.nx, state.ny, state.stride());
    for iy in 1..=ny {
        let row = iy * s;
        state.cells[row] = ghost(&state.cells[row + 1], bc.left, 1);
        state.cells[row + nx + 1] = ghost(&state.cells[row + nx], bc.right, 1);
    }
    for ix in 1..=nx {
        state.cells[ix] = ghost(&state.cells[s + ix], bc.bottom, 2);
        state.cells[(ny + 1) * s + ix] = ghost(&state.cells[ny * s + ix], bc.top, 2);
    }
}

/// `cfl * min(dx / (|u| + c))` over interior cells.
pub fn compute_dt(state: &ConservedState, cfl: f64) -> Result<f64, HydroError> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(HydroError::InvalidConfig(format!("cfl {cfl} outside (0, 1)")));
    }
    let mut min = f64::INFINITY;
    for iy in 0..state.ny {
        for ix in 0..state.nx {
            let p = state.primitive(ix, iy);
            let speed = (p.u * p.u + p.v * p.v).sqrt() + (state.gamma * p.p / p.rho).sqrt();
            if !speed.is_finite() {
                return Err(HydroError::NonFiniteWaveSpeed { ix, iy });
            }
            min = min.min(state.dx / speed);
        }
    }
    if !min.is_finite() {
        return Err(HydroError::NonFiniteWaveSpeed { ix: 0, iy: 0 });
    }
    Ok(cfl * min)
}

/// Primitive state in a face-normal frame.
#[derive(Clone, Copy, Default)]
struct Face {
    rho: f64,
    un: f64,
    ut: f64,
    p: f64,
    c: f64,
    energy: f64,
    phi: [f64; NUM_MATERIALS],
}

impl Face {
    #[inline]
    fn new(q: &Cons, normal: usize, gamma: f64) -> Self {
        let tangent = 3 - normal;
        let rho = q[0];
        let un = q[normal] / rho;
        let ut = q[tangent] / rho;
        let energy = q[3];
        let p = (gamma - 1.0) * (energy - 0.5 * rho * (un * un + ut * ut));
        let mut phi = [0.0; NUM_MATERIALS];
        for (k, f) in phi.iter_mut().enumerate() {
            *f = q[4 + k] / rho;
        }
        Self {
            rho,
            un,
            ut,
            p,
            c: (gamma * p.max(0.0) / rho).sqrt(),
            energy,
            phi,
        }
    }

    /// Physical flux as [mass, normal momentum, tangential momentum, energy].
    #[inline]
    fn flux(&self) -> [f64; 4] {
        let m = self.rho * self.un;
        [m, m * self.un + self.p, m * self.ut, (self.energy + self.p) * self.un]
    }
}

/// HLLC flux across a face, returned in the face frame:
/// [mass, normal momentum, tangential momentum, energy, partial densities].
#[inline]
fn hllc(l: &Face, r: &Face) -> [f64; NUM_VARS] {
    let sl = (l.un - l.c).min(r.un - r.c);
    let sr = (l.un + l.c).max(r.un + r.c);
    let core = if sl >= 0.0 {
        l.flux()
    } else if sr <= 0.0 {
        r.flux()
    } else {
        let ml = l.rho * (sl - l.un);
        let mr = r.rho * (sr - r.un);
        let s_star = (r.p - l.p + l.un * ml - r.un * mr) / (ml - mr);
        let p_lr = 0.5 * (l.p + r.p + ml * (s_star - l.un) + mr * (s_star - r.un));
        let (side, s) = if s_star >= 0.0 { (l, sl) } else { (r, sr) };
        let f = side.flux();
        let u = [
            side.rho,
            side.rho * side.un,
            side.rho * side.ut,
            side.energy,
        ];
        let d = [0.0, 1.0, 0.0, s_star];
        let inv = 1.0 / (s - s_star);
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = (s_star * (s * u[k] - f[k]) + s * p_lr * d[k]) * inv;
        }
        out
    };
    let mut flux = [0.0; NUM_VARS];
    flux[..4].copy_from_slice(&core);
    let upwind = if core[0] >= 0.0 { &l.phi } else { &r.phi };
    for k in 0..NUM_MATERIALS {
        flux[4 + k] = core[0] * upwind[k];
    }
    flux
}

/// Explicit finite-volume integrator with reusable scratch buffers.
#[derive(Clone, Debug)]
pub struct Solver {
    pub boundaries: Boundaries,
    residual: Vec<Cons>,
    stage: Vec<Cons>,
    faces: Vec<[f64; NUM_VARS]>,
}

impl Solver {
    pub fn new(boundaries: Boundaries) -> Self {
        Self {
            boundaries,
            residual: Vec::new(),
            stage: Vec::new(),
            faces: Vec::new(),
        }
    }

    /// Fills `self.residual` with `-div F` for every interior cell of `cells`
    /// (ghosts must already be set).
    fn residual(&mut self, state: &ConservedState, cells: &[Cons]) {
        let (nx, ny, s) = (state.nx, state.ny, state.stride());
        let inv_dx = 1.0 / state.dx;
        let gamma = state.gamma;
        self.residual.clear();
        self.residual.resize(cells.len(), [0.0; NUM_VARS]);
        self.faces.resize(nx + 1, [0.0; NUM_VARS]);

        for iy in 1..=ny {
            let row = iy * s;
            let mut left = Face::new(&cells[row], 1, gamma);
            for ix in 0..=nx {
                let right = Face::new(&cells[row + ix + 1], 1, gamma);
                let f = hllc(&left, &right);
                self.faces[ix] = [f[0], f[1], f[2], f[3], f[4], f[5], f[6]];
                left = right;
            }
            for ix in 1..=nx {
                let (fl, fr) = (&self.faces[ix - 1], &self.faces[ix]);
                let r = &mut self.residual[row + ix];
                for k in 0..NUM_VARS {
                    r[k] += (fl[k] - fr[k]) * inv_dx;
                }
            }
        }

        // y faces: normal momentum is component 2, tangential is component 1.
        let mut lower: Vec<Face> = (0..=nx + 1).map(|ix| Face::new(&cells[ix], 2, gamma)).collect();
        let mut below_flux = vec![[0.0; NUM_VARS]; nx + 2];
        for ix in 1..=nx {
            let upper = Face::new(&cells[s + ix], 2, gamma);
            below_flux[ix] = swap_tangent(hllc(&lower[ix], &upper));
        }
        for iy in 1..=ny {
            let row = iy * s;
            for ix in 1..=nx {
                lower[ix] = Face::new(&cells[row + ix], 2, gamma);
                let upper = Face::new(&cells[row + s + ix], 2, gamma);
                let above = swap_tangent(hllc(&lower[ix], &upper));
                let r = &mut self.residual[row + ix];
                let below = &below_flux[ix];
                for k in 0..NUM_VARS {
                    r[k] += (below[k] - above[k]) * inv_dx;
                }
                below_flux[ix] = above;
            }
        }
    }

    /// One Heun step of size `dt`. On error `state` is left untouched.
    pub fn step(&mut self, state: &mut ConservedState, dt: f64) -> Result<(), HydroError> {
        let bc = self.boundaries;
        let start = state.cells.clone();

        apply_boundary(state, &bc);
        self.residual(state, &state.cells);
        self.stage.clone_from(&state.cells);
        for_interior(state, |i| {
            for k in 0..NUM_VARS {
                self.stage[i][k] += dt * self.residual[i][k];
            }
        });

        let mut trial = ConservedState {
            cells: std::mem::take(&mut self.stage),
            ..state.clone_header()
        };
        let outcome = trial.check_physical().and_then(|_| {
            apply_boundary(&mut trial, &bc);
            self.residual(&trial, &trial.cells);
            for_interior(state, |c| {
                for k in 0..NUM_VARS {
                    let second = trial.cells[c][k] + dt * self.residual[c][k];
                    trial.cells[c][k] = 0.5 * (start[c][k] + second);
                }
            });
            trial.check_physical()
        });
        match outcome {
            Ok(()) => {
                self.stage = std::mem::replace(&mut state.cells, trial.cells);
                apply_boundary(state, &bc);
                Ok(())
            }
            Err(e) => {
                self.stage = trial.cells;
                state.cells = start;
                Err(e)
            }
        }
    }

    /// Tries `dt`, halving up to [`MAX_DT_HALVINGS`] times on positivity
    /// failure. Returns the step actually taken.
    pub fn step_with_retry(&mut self, state: &mut ConservedState, dt: f64) -> Result<f64, HydroError> {
        let mut trial = dt;
        let mut last = None;
        for _ in 0..=MAX_DT_HALVINGS {
            match self.step(state, trial) {
                Ok(()) => return Ok(trial),
                Err(e @ HydroError::Positivity { .. }) => {
                    last = Some(e);
                    trial *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[inline]
fn swap_tangent(f: [f64; NUM_VARS]) -> [f64; NUM_VARS] {
    let mut out = f;
    out[1] = f[2];
    out[2] = f[1];
    out
}

fn for_interior(state: &ConservedState, mut f: impl FnMut(usize)) {
    for iy in 0..state.ny {
        let start = state.index(0, iy);
        for i in start..start + state.nx {
            f(i);
        }
    }
}

impl ConservedState {
    fn clone_header(&self) -> ConservedState {
        ConservedState {
            nx: self.nx,
            ny: self.ny,
            dx: self.dx,
            gamma: self.gamma,
            cv: self.cv,
            cells: Vec::new(),
        }
    }
}
