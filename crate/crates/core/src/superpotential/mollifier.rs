use std::sync::OnceLock;

use super::{JumpFunction, SuperpotentialError};
use crate::quadrature::adaptive_gauss;

/// Absolute tolerance of each adaptive sub-integral.
const QUAD_TOL: f64 = 1e-13;

/// Unnormalised bump `exp(-1/(1 - s^2))` on `(-1, 1)`.
#[inline]
fn raw_bump(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

#[inline]
fn raw_bump_derivative(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp() * (-2.0 * s / (q * q))
    }
}

fn bump_normalization() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let mass = adaptive_gauss(&raw_bump, -1.0, 0.0, 1e-16)
            + adaptive_gauss(&raw_bump, 0.0, 1.0, 1e-16);
        1.0 / mass
    })
}

/// Scaled bump kernel `h_eps(s) = h(s/eps)/eps` with `h = C exp(-1/(1 - s^2))`
/// supported in `(-1, 1)` and of unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
    normalization: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self, SuperpotentialError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SuperpotentialError::InvalidParameter(format!(
                "mollifier scale must be positive, got {epsilon}"
            )));
        }
        Ok(Mollifier {
            epsilon,
            normalization: bump_normalization(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `h(s)`.
    pub fn kernel(&self, s: f64) -> f64 {
        self.normalization * raw_bump(s)
    }

    /// `h'(s)`.
    pub fn kernel_derivative(&self, s: f64) -> f64 {
        self.normalization * raw_bump_derivative(s)
    }

    /// `h_eps(s)`.
    pub fn scaled(&self, s: f64) -> f64 {
        self.kernel(s / self.epsilon) / self.epsilon
    }

    /// `h_eps'(s)`.
    pub fn scaled_derivative(&self, s: f64) -> f64 {
        self.kernel_derivative(s / self.epsilon) / (self.epsilon * self.epsilon)
    }

    /// `||h_eps'||_inf`, by grid maximisation of the kernel derivative refined
    /// with golden-section search around the best grid point.
    pub fn derivative_sup_norm(&self) -> f64 {
        static SUP: OnceLock<f64> = OnceLock::new();
        let unscaled = *SUP.get_or_init(|| {
            let f = |s: f64| raw_bump_derivative(s).abs();
            let n = 20_000;
            let h = 1.0 / n as f64;
            let best = (0..n)
                .max_by(|&a, &b| f(a as f64 * h).total_cmp(&f(b as f64 * h)))
                .unwrap();
            let (mut lo, mut hi) = (((best as f64) - 1.0) * h, ((best as f64) + 1.0) * h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                if f(x1) > f(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            f(0.5 * (lo + hi))
        });
        self.normalization * unscaled / (self.epsilon * self.epsilon)
    }

    /// Sub-intervals of `(-1, 1)` in the kernel variable `sigma` on which
    /// `s -> theta(t - eps sigma)` is a single polynomial piece.
    fn split(&self, theta: &JumpFunction, t: f64) -> Vec<(f64, f64, usize)> {
        let eps = self.epsilon;
        // sigma decreases as the argument t - eps*sigma crosses breakpoints left to right
        let lo_idx = theta.piece_index(t - eps);
        let hi_idx = theta.piece_index(t + eps);
        let mut cuts: Vec<f64> = vec![-1.0];
        for b in
            &theta.breakpoints()[lo_idx.saturating_sub(1)..hi_idx.min(theta.breakpoints().len())]
        {
            let sigma = (t - b) / eps;
            if sigma > -1.0 && sigma < 1.0 {
                cuts.push(sigma);
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (w[0], w[1], theta.piece_index(t - eps * mid))
            })
            .collect()
    }

    /// `Theta_eps(t) = int Theta(t - s) h_eps(s) ds`.
    pub fn mollify(&self, theta: &JumpFunction, t: f64) -> f64 {
        let eps = self.epsilon;
        let c = self.normalization;
        self.split(theta, t)
            .into_iter()
            .map(|(a, b, piece)| {
                let p = &theta.pieces()[piece];
                let integrand = |sigma: f64| p.eval(t - eps * sigma) * raw_bump(sigma);
                c * adaptive_gauss(&integrand, a, b, QUAD_TOL)
            })
            .sum()
    }

    /// `Theta_eps'(t) = int Theta(t - s) h_eps'(s) ds`.
    pub fn mollify_derivative(&self, theta: &JumpFunction, t: f64) -> f64 {
        let eps = self.epsilon;
        let c = self.normalization;
        self.split(theta, t)
            .into_iter()
            .map(|(a, b, piece)| {
                let p = &theta.pieces()[piece];
                let integrand = |sigma: f64| p.eval(t - eps * sigma) * raw_bump_derivative(sigma);
                c * adaptive_gauss(&integrand, a, b, QUAD_TOL * eps)
            })
            .sum::<f64>()
            / eps
    }
}
