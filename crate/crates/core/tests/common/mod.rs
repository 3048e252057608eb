//! Shared by the integration and acceptance tests. The oracles here avoid the
//! library's quadrature, mollifier and assembly code paths; `laws` holds the
//! random law sampler and the property checks run against the library.
#![allow(dead_code)]

pub mod laws;

use std::f64::consts::PI;

use rayon::prelude::*;

use nshvi::galerkin::GalerkinSystem;
use nshvi::superpotential::JumpFunction;

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// `int exp(-1/(1-s^2)) ds` over `(-1, 1)`, high-precision reference value.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

/// `Theta_eps(t)` by Simpson's rule in the kernel variable, split at the jumps.
pub fn theta_eps(theta: &JumpFunction, eps: f64, t: f64, n: usize) -> f64 {
    let mut cuts = vec![-1.0];
    for b in theta.breakpoints() {
        let s = (t - b) / eps;
        if s > -1.0 && s < 1.0 {
            cuts.push(s);
        }
    }
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let piece = &theta.pieces()[theta.piece_index(t - eps * mid)];
        total += simpson(|s| piece.eval(t - eps * s) * bump(s), a, b, n);
    }
    total / BUMP_MASS
}

/// Outward normal velocity of mode `(k, l)` at a boundary point, from the closed form.
pub fn mode_normal_trace((k, l): (u32, u32), x: f64, y: f64) -> f64 {
    let (kp, lp) = (k as f64 * PI, l as f64 * PI);
    let u = -lp * (kp * x).cos() * (lp * y).sin();
    let v = kp * (kp * x).sin() * (lp * y).cos();
    if y == 0.0 {
        -v
    } else if y == 1.0 {
        v
    } else if x == 0.0 {
        -u
    } else {
        u
    }
}

fn velocity((k, l): (u32, u32), x: f64, y: f64) -> (f64, f64) {
    let (kp, lp) = (k as f64 * PI, l as f64 * PI);
    (
        -lp * (kp * x).cos() * (lp * y).sin(),
        kp * (kp * x).sin() * (lp * y).cos(),
    )
}

fn vorticity((k, l): (u32, u32), x: f64, y: f64) -> f64 {
    let (kp, lp) = (k as f64 * PI, l as f64 * PI);
    (kp * kp + lp * lp) * (kp * x).cos() * (lp * y).cos()
}

/// `B[i,j,k] = int rot u_i (u_j x u_k)` by composite 2-D Simpson.
pub fn btensor_simpson(modes: &[(u32, u32)], n: usize) -> Vec<f64> {
    let m = modes.len();
    let mut out = vec![0.0; m * m * m];
    let h = 1.0 / n as f64;
    let wt = |k: usize| {
        if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    for a in 0..=n {
        for b in 0..=n {
            let (x, y) = (a as f64 * h, b as f64 * h);
            let w = wt(a) * wt(b) * h * h / 9.0;
            let rot: Vec<f64> = modes.iter().map(|&md| vorticity(md, x, y)).collect();
            let vel: Vec<(f64, f64)> = modes.iter().map(|&md| velocity(md, x, y)).collect();
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        out[(i * m + j) * m + k] +=
                            w * rot[i] * (vel[j].0 * vel[k].1 - vel[j].1 * vel[k].0);
                    }
                }
            }
        }
    }
    out
}

/// Residual of the discrete problem rebuilt from closed-form pieces: analytic
/// diagonal, Simpson B tensor, closed-form traces and Simpson-mollified law.
/// Only the node positions, node weights and load are taken from `sys`.
pub struct OracleProblem {
    pub modes: Vec<(u32, u32)>,
    pub a_diag: Vec<f64>,
    pub btensor: Vec<f64>,
    pub trace: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub load: Vec<f64>,
    pub theta: JumpFunction,
    pub eps: f64,
    pub simpson_n: usize,
}

impl OracleProblem {
    pub fn new(sys: &GalerkinSystem, theta: &JumpFunction, eps: f64) -> Self {
        let modes = sys.basis().modes().to_vec();
        let nu = sys.nu();
        let gamma = |k: u32| if k == 0 { 1.0 } else { 0.5 };
        let a_diag = modes
            .iter()
            .map(|&(k, l)| {
                let e = (k * k + l * l) as f64;
                nu * PI.powi(4) * e * e * gamma(k) * gamma(l)
            })
            .collect();
        let trace = sys
            .boundary()
            .iter()
            .map(|nd| {
                modes
                    .iter()
                    .map(|&md| mode_normal_trace(md, nd.x, nd.y))
                    .collect()
            })
            .collect();
        OracleProblem {
            btensor: btensor_simpson(&modes, 600),
            a_diag,
            trace,
            weights: sys.boundary().iter().map(|nd| nd.weight).collect(),
            load: sys.load().to_vec(),
            theta: theta.clone(),
            eps,
            simpson_n: 400,
            modes,
        }
    }

    pub fn residual(&self, c: &[f64]) -> Vec<f64> {
        let m = c.len();
        let mut r: Vec<f64> = (0..m)
            .map(|i| self.a_diag[i] * c[i] - self.load[i])
            .collect();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    r[k] += self.btensor[(i * m + j) * m + k] * c[i] * c[j];
                }
            }
        }
        for (row, w) in self.trace.iter().zip(&self.weights) {
            let u: f64 = row.iter().zip(c).map(|(t, c)| t * c).sum();
            let xi = theta_eps(&self.theta, self.eps, u, self.simpson_n);
            for k in 0..m {
                r[k] += w * xi * row[k];
            }
        }
        r
    }
}

/// All sign changes of `f` on `[lo, hi]` found on a uniform grid, refined by bisection.
pub fn bisection_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let h = (hi - lo) / grid as f64;
    let mut roots = Vec::new();
    let mut prev = (lo, f(lo));
    for k in 1..=grid {
        let x = lo + k as f64 * h;
        let fx = f(x);
        if prev.1 == 0.0 {
            roots.push(prev.0);
        } else if prev.1 * fx < 0.0 {
            let (mut a, mut b, mut fa) = (prev.0, x, prev.1);
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 || b - a < 1e-15 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = (x, fx);
    }
    roots
}

/// Minimiser of `|f|` near a root: a coarse grid over `[lo, hi]^2` locates
/// candidates, then each box is shrunk around the best point of a 9x9 grid.
pub fn grid_zoom_root<F: Fn(f64, f64) -> (f64, f64) + Sync>(
    f: F,
    center: (f64, f64),
    half: f64,
    levels: usize,
) -> (f64, f64) {
    let norm = |p: (f64, f64)| {
        let (a, b) = f(p.0, p.1);
        a.hypot(b)
    };
    let (mut c, mut h) = (center, half);
    let g = 9;
    for _ in 0..levels {
        let step = 2.0 * h / (g - 1) as f64;
        let vals: Vec<((f64, f64), f64)> = (0..g * g)
            .into_par_iter()
            .map(|idx| {
                let p = (
                    c.0 - h + (idx / g) as f64 * step,
                    c.1 - h + (idx % g) as f64 * step,
                );
                (p, norm(p))
            })
            .collect();
        // first minimum in index order, so the result does not depend on scheduling
        let mut best = (c, norm(c));
        for &(p, v) in &vals {
            if v < best.1 {
                best = (p, v);
            }
        }
        c = best.0;
        h = step;
    }
    c
}

/// Coarse-grid candidates for `grid_zoom_root`: local minima of `|f|` on a grid.
pub fn grid_minima<F: Fn(f64, f64) -> (f64, f64) + Sync>(
    f: F,
    lo: (f64, f64),
    hi: (f64, f64),
    n: usize,
) -> Vec<(f64, f64)> {
    let (hx, hy) = ((hi.0 - lo.0) / n as f64, (hi.1 - lo.1) / n as f64);
    let vals: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            (0..=n)
                .map(|j| {
                    let (a, b) = f(lo.0 + i as f64 * hx, lo.1 + j as f64 * hy);
                    a.hypot(b)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let v = vals[i][j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0)
                        && a >= 0
                        && b >= 0
                        && a <= n as i64
                        && b <= n as i64
                        && vals[a as usize][b as usize] < v
                    {
                        is_min = false;
                    }
                }
            }
            if is_min {
                out.push((lo.0 + i as f64 * hx, lo.1 + j as f64 * hy));
            }
        }
    }
    out
}
