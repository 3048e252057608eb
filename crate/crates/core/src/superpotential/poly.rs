//! Dense real polynomials in the monomial basis, with exact extremum search on
//! closed and half-infinite intervals.

use serde::{Deserialize, Serialize};

/// `c[0] + c[1] t + c[2] t^2 + ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly(Vec<f64>);

/// Location and value of an extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub at: f64,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly(coeffs)
    }

    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() == 1 {
            return Poly::constant(0.0);
        }
        Poly::new(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at the origin.
    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        out.extend(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k as f64 + 1.0)),
        );
        Poly::new(out)
    }

    pub fn shifted(&self, alpha: f64) -> Poly {
        let mut c = self.0.clone();
        c[0] -= alpha;
        Poly::new(c)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Sign of `p(t)` as `t -> +inf` (`right = true`) or `t -> -inf`; zero for the zero polynomial.
    pub fn end_sign(&self, right: bool) -> f64 {
        let lead = self.0[self.0.len() - 1];
        if lead == 0.0 {
            return 0.0;
        }
        let s = lead.signum();
        if right || self.degree().is_multiple_of(2) {
            s
        } else {
            -s
        }
    }

    /// Radius containing every real root (Cauchy bound).
    fn root_radius(&self) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = self.0[n].abs();
        1.0 + self.0[..n]
            .iter()
            .map(|c| c.abs() / lead)
            .fold(0.0, f64::max)
    }

    /// Real roots on `[lo, hi]`, isolated through the critical points of the derivative.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if lo > hi || self.degree() == 0 {
            return Vec::new();
        }
        if self.degree() == 1 {
            let r = -self.0[0] / self.0[1];
            return if (lo..=hi).contains(&r) {
                vec![r]
            } else {
                Vec::new()
            };
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().roots_in(lo, hi));
        knots.push(hi);
        let mut roots: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                roots.push(a);
            } else if fa * fb < 0.0 {
                roots.push(self.bisect(a, b, fa));
            }
        }
        if self.eval(hi) == 0.0 {
            roots.push(hi);
        }
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + a.abs()));
        roots
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        0.5 * (a + b)
    }

    /// Minimum and maximum on the closed interval `[lo, hi]`.
    pub fn extrema(&self, lo: f64, hi: f64) -> (Extremum, Extremum) {
        debug_assert!(lo <= hi);
        let mut candidates = vec![lo, hi];
        // critical points are located on a fixed bracket, so nested windows see identical candidates
        let d = self.derivative();
        let r = d.root_radius() + 1.0;
        candidates.extend(
            d.roots_in(-r, r)
                .into_iter()
                .filter(|x| (lo..=hi).contains(x)),
        );
        let mut min = Extremum {
            value: f64::INFINITY,
            at: lo,
        };
        let mut max = Extremum {
            value: f64::NEG_INFINITY,
            at: lo,
        };
        for t in candidates {
            let v = self.eval(t);
            if v < min.value {
                min = Extremum { value: v, at: t };
            }
            if v > max.value {
                max = Extremum { value: v, at: t };
            }
        }
        (min, max)
    }

    /// Extrema on an interval whose ends may be infinite. An unbounded direction
    /// reports `+-inf` with `at` set to a finite point where the polynomial already
    /// exceeds every finite candidate.
    pub fn extrema_unbounded(&self, lo: f64, hi: f64) -> (Extremum, Extremum) {
        if lo.is_finite() && hi.is_finite() {
            return self.extrema(lo, hi);
        }
        let radius = self.derivative().root_radius() + 1.0;
        let clip_lo = if lo.is_finite() {
            lo
        } else {
            (-radius).min(hi) - 1.0
        };
        let clip_hi = if hi.is_finite() {
            hi
        } else {
            radius.max(lo) + 1.0
        };
        let (mut min, mut max) = self.extrema(clip_lo, clip_hi);
        for (open, right, anchor) in [
            (lo.is_infinite(), false, clip_lo),
            (hi.is_infinite(), true, clip_hi),
        ] {
            if !open {
                continue;
            }
            let s = self.end_sign(right);
            if self.degree() == 0 || s == 0.0 {
                continue;
            }
            // Past the root radius of p' the polynomial is monotone, so walking outward
            // finds a point beating the finite candidates.
            let mut t = anchor;
            let step = if right { 1.0 } else { -1.0 };
            let mut width = 1.0 + anchor.abs();
            for _ in 0..64 {
                let v = self.eval(t);
                if (s > 0.0 && v > max.value) || (s < 0.0 && v < min.value) {
                    break;
                }
                t += step * width;
                width *= 2.0;
            }
            if s > 0.0 {
                max = Extremum {
                    value: f64::INFINITY,
                    at: t,
                };
            } else {
                min = Extremum {
                    value: f64::NEG_INFINITY,
                    at: t,
                };
            }
        }
        (min, max)
    }
}
