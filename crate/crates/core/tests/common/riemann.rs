//! Exact solution of the 1D Riemann problem for an ideal gas, sampled on
//! x/t rays. Two-shock/two-rarefaction pressure function with Newton
//! iteration for the star pressure.

#[derive(Clone, Copy, Debug)]
pub struct Side {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

impl Side {
    fn c(&self, g: f64) -> f64 {
        (g * self.p / self.rho).sqrt()
    }
}

/// Pressure function f_K(p) and its derivative.
fn wave(p: f64, s: &Side, g: f64) -> (f64, f64) {
    if p > s.p {
        let a = 2.0 / ((g + 1.0) * s.rho);
        let b = (g - 1.0) / (g + 1.0) * s.p;
        let root = (a / (p + b)).sqrt();
        ((p - s.p) * root, root * (1.0 - 0.5 * (p - s.p) / (p + b)))
    } else {
        let c = s.c(g);
        let ratio = p / s.p;
        let f = 2.0 * c / (g - 1.0) * (ratio.powf((g - 1.0) / (2.0 * g)) - 1.0);
        let df = ratio.powf(-(g + 1.0) / (2.0 * g)) / (s.rho * c);
        (f, df)
    }
}

/// Star-region pressure and velocity.
pub fn star(l: &Side, r: &Side, g: f64) -> (f64, f64) {
    let du = r.u - l.u;
    let mut p = (0.5 * (l.p + r.p)).max(1e-10);
    for _ in 0..100 {
        let (fl, dl) = wave(p, l, g);
        let (fr, dr) = wave(p, r, g);
        let next = (p - (fl + fr + du) / (dl + dr)).max(1e-12);
        let done = (next - p).abs() <= 1e-14 * (next + p);
        p = next;
        if done {
            break;
        }
    }
    let (fl, _) = wave(p, l, g);
    let (fr, _) = wave(p, r, g);
    (p, 0.5 * (l.u + r.u) + 0.5 * (fr - fl))
}

/// Density, velocity and pressure at similarity coordinate `xi = x / t`.
pub fn sample(l: &Side, r: &Side, g: f64, xi: f64) -> Side {
    let (ps, us) = star(l, r, g);
    let gm = (g - 1.0) / (g + 1.0);
    if xi <= us {
        let c = l.c(g);
        if ps > l.p {
            let s = l.u - c * ((g + 1.0) / (2.0 * g) * ps / l.p + (g - 1.0) / (2.0 * g)).sqrt();
            if xi <= s {
                *l
            } else {
                let rho = l.rho * (ps / l.p + gm) / (gm * ps / l.p + 1.0);
                Side { rho, u: us, p: ps }
            }
        } else {
            let cs = c * (ps / l.p).powf((g - 1.0) / (2.0 * g));
            if xi <= l.u - c {
                *l
            } else if xi >= us - cs {
                Side {
                    rho: l.rho * (ps / l.p).powf(1.0 / g),
                    u: us,
                    p: ps,
                }
            } else {
                let k = 2.0 / (g + 1.0) + gm / c * (l.u - xi);
                Side {
                    rho: l.rho * k.powf(2.0 / (g - 1.0)),
                    u: 2.0 / (g + 1.0) * (c + 0.5 * (g - 1.0) * l.u + xi),
                    p: l.p * k.powf(2.0 * g / (g - 1.0)),
                }
            }
        }
    } else {
        let c = r.c(g);
        if ps > r.p {
            let s = r.u + c * ((g + 1.0) / (2.0 * g) * ps / r.p + (g - 1.0) / (2.0 * g)).sqrt();
            if xi >= s {
                *r
            } else {
                let rho = r.rho * (ps / r.p + gm) / (gm * ps / r.p + 1.0);
                Side { rho, u: us, p: ps }
            }
        } else {
            let cs = c * (ps / r.p).powf((g - 1.0) / (2.0 * g));
            if xi >= r.u + c {
                *r
            } else if xi <= us + cs {
                Side {
                    rho: r.rho * (ps / r.p).powf(1.0 / g),
                    u: us,
                    p: ps,
                }
            } else {
                let k = 2.0 / (g + 1.0) - gm / c * (r.u - xi);
                Side {
                    rho: r.rho * k.powf(2.0 / (g - 1.0)),
                    u: 2.0 / (g + 1.0) * (-c + 0.5 * (g - 1.0) * r.u + xi),
                    p: r.p * k.powf(2.0 * g / (g - 1.0)),
                }
            }
        }
    }
}

/// Cell-averaged exact density on `n` cells of [0, 1] with the diaphragm at
/// 0.5, using `sub` sample points per cell.
pub fn cell_averaged_density(l: &Side, r: &Side, g: f64, t: f64, n: usize, sub: usize) -> Vec<f64> {
    let dx = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            (0..sub)
                .map(|k| {
                    let x = (i as f64 + (k as f64 + 0.5) / sub as f64) * dx;
                    sample(l, r, g, (x - 0.5) / t).rho
                })
                .sum::<f64>()
                / sub as f64
        })
        .collect()
}

pub const SOD_LEFT: Side = Side {
    rho: 1.0,
    u: 0.0,
    p: 1.0,
};
pub const SOD_RIGHT: Side = Side {
    rho: 0.125,
    u: 0.0,
    p: 0.1,
};
