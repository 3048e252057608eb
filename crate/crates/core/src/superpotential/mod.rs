//! Discontinuous boundary laws `Theta`, their superpotentials `j(t) = int_0^t Theta`,
//! essential envelopes, filled-in subdifferential intervals and the sign
//! hypothesis that makes the boundary term coercive.
//!
//! A law is piecewise polynomial with finitely many jump points, so every
//! essential supremum/infimum here is computed exactly from the pieces.

mod mollifier;
mod poly;

pub use mollifier::Mollifier;
pub use poly::{Extremum, Poly};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuperpotentialError {
    #[error("invalid boundary law: {0}")]
    InvalidDefinition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Which half-line broke the sign condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RauchSide {
    /// `esssup_{t < -t0} Theta > 0`
    Negative,
    /// `essinf_{t > t0} Theta < 0`
    Positive,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[error("sign condition fails on the {side:?} side: Theta({witness}) = {value} (t0 = {t0})")]
pub struct RauchViolation {
    pub t0: f64,
    pub side: RauchSide,
    pub witness: f64,
    pub value: f64,
}

/// Closed interval `[lower, upper]`, the filled-in value of a law at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilledInterval {
    pub lower: f64,
    pub upper: f64,
}

impl FilledInterval {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper, "{lower} > {upper}");
        FilledInterval { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Signed distance inside the interval: positive when `v` is interior,
    /// negative by the distance to the nearest end otherwise.
    pub fn margin(&self, v: f64) -> f64 {
        (v - self.lower).min(self.upper - v)
    }

    pub fn widened(&self, by: f64) -> Self {
        FilledInterval::new(self.lower - by, self.upper + by)
    }

    pub fn hull(&self, other: &FilledInterval) -> Self {
        FilledInterval::new(self.lower.min(other.lower), self.upper.max(other.upper))
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Output of a successful sign-condition check: `Theta_eps >= 0` beyond `a`,
/// `<= 0` below `-a`, and `|Theta_eps| <= b` on `[-a, a]`, for every `eps < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RauchCertificate {
    pub t0: f64,
    pub a: f64,
    pub b: f64,
}

/// Value of a law at a point together with the jump convention that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// `true` when `t` is a breakpoint and the right limit was returned.
    pub right_limit_at_jump: bool,
}

/// Piecewise-polynomial scalar law with finitely many jump points.
///
/// Piece `i` lives on the open interval `(breakpoints[i-1], breakpoints[i])`
/// (unbounded at both ends of the list). At a breakpoint the law evaluates to
/// its right limit.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpFunction {
    breakpoints: Vec<f64>,
    pieces: Vec<Poly>,
    antiderivatives: Vec<Poly>,
    left_limits: Vec<f64>,
    right_limits: Vec<f64>,
}

impl JumpFunction {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Poly>) -> Result<Self, SuperpotentialError> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(SuperpotentialError::InvalidDefinition(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(SuperpotentialError::InvalidDefinition(
                "breakpoints must be finite".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SuperpotentialError::InvalidDefinition(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if pieces.iter().any(|p| !p.is_finite()) {
            return Err(SuperpotentialError::InvalidDefinition(
                "polynomial coefficients must be finite".into(),
            ));
        }
        let left_limits = breakpoints
            .iter()
            .enumerate()
            .map(|(i, &b)| pieces[i].eval(b))
            .collect();
        let right_limits = breakpoints
            .iter()
            .enumerate()
            .map(|(i, &b)| pieces[i + 1].eval(b))
            .collect();
        let antiderivatives = pieces.iter().map(Poly::antiderivative).collect();
        Ok(JumpFunction {
            breakpoints,
            pieces,
            antiderivatives,
            left_limits,
            right_limits,
        })
    }

    /// Single polynomial on the whole line.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        JumpFunction::new(Vec::new(), vec![Poly::new(coeffs)]).expect("finite coefficients")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(vec![c])
    }

    pub fn linear(slope: f64) -> Self {
        Self::polynomial(vec![0.0, slope])
    }

    pub fn sign() -> Self {
        JumpFunction::new(vec![0.0], vec![Poly::constant(-1.0), Poly::constant(1.0)]).unwrap()
    }

    /// Orifice law: `p (s - a)/(b - a)` on `[0, b)`, zero beyond `b`, and zero
    /// on the negative half-line.
    pub fn orifice(p_tilde: f64, a: f64, b: f64) -> Result<Self, SuperpotentialError> {
        if !(p_tilde.is_finite() && a.is_finite() && b.is_finite()) || a < 0.0 || b <= a {
            return Err(SuperpotentialError::InvalidParameter(format!(
                "orifice needs 0 <= a < b, got a = {a}, b = {b}, p_tilde = {p_tilde}"
            )));
        }
        let slope = p_tilde / (b - a);
        JumpFunction::new(
            vec![0.0, b],
            vec![
                Poly::constant(0.0),
                Poly::new(vec![-slope * a, slope]),
                Poly::constant(0.0),
            ],
        )
    }

    /// Compact bump `height (1 - ((t - center)/half_width)^2)^2` on
    /// `[center - half_width, center + half_width]`, zero elsewhere.
    pub fn bump(center: f64, half_width: f64, height: f64) -> Result<Self, SuperpotentialError> {
        if !(half_width > 0.0 && center.is_finite() && height.is_finite()) {
            return Err(SuperpotentialError::InvalidParameter(
                "bump needs a positive half width".into(),
            ));
        }
        // (1 - u^2)^2 with u = (t - c)/w, expanded in t.
        let (c, w2) = (center, half_width * half_width);
        let q = [1.0 - c * c / w2, 2.0 * c / w2, -1.0 / w2];
        let mut sq = vec![0.0; 5];
        for (i, qi) in q.iter().enumerate() {
            for (j, qj) in q.iter().enumerate() {
                sq[i + j] += height * qi * qj;
            }
        }
        JumpFunction::new(
            vec![center - half_width, center + half_width],
            vec![Poly::constant(0.0), Poly::new(sq), Poly::constant(0.0)],
        )
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Poly] {
        &self.pieces
    }

    pub fn left_limits(&self) -> &[f64] {
        &self.left_limits
    }

    pub fn right_limits(&self) -> &[f64] {
        &self.right_limits
    }

    /// Open interval of piece `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.breakpoints[i - 1]
        };
        let hi = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// Index of the piece used to evaluate at `t` (right piece at a breakpoint).
    #[inline]
    pub fn piece_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    fn breakpoint_index(&self, t: f64) -> Option<usize> {
        self.breakpoints.binary_search_by(|b| b.total_cmp(&t)).ok()
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.pieces[self.piece_index(t)].eval(t)
    }

    pub fn eval_detailed(&self, t: f64) -> Evaluation {
        Evaluation {
            value: self.eval(t),
            right_limit_at_jump: self.breakpoint_index(t).is_some(),
        }
    }

    /// `(Theta(t - 0), Theta(t + 0))`.
    pub fn one_sided_limits(&self, t: f64) -> (f64, f64) {
        match self.breakpoint_index(t) {
            Some(i) => (self.left_limits[i], self.right_limits[i]),
            None => {
                let v = self.eval(t);
                (v, v)
            }
        }
    }

    /// Essential infimum and supremum on the interval `[lo, hi]` (ends may be
    /// infinite). Pieces meeting the interval in a null set are ignored.
    pub fn ess_bounds(&self, lo: f64, hi: f64) -> (Extremum, Extremum) {
        let mut min = Extremum {
            value: f64::INFINITY,
            at: lo,
        };
        let mut max = Extremum {
            value: f64::NEG_INFINITY,
            at: lo,
        };
        let first = self.piece_index(lo).saturating_sub(1);
        for i in first..self.pieces.len() {
            let (plo, phi) = self.interval(i);
            let (l, r) = (plo.max(lo), phi.min(hi));
            if plo >= hi {
                break;
            }
            if l >= r {
                continue;
            }
            let (pmin, pmax) = self.pieces[i].extrema_unbounded(l, r);
            if pmin.value < min.value {
                min = pmin;
            }
            if pmax.value > max.value {
                max = pmax;
            }
        }
        (min, max)
    }

    /// `esssup_{|s| <= radius} |Theta(s)|`.
    pub fn abs_sup(&self, center: f64, radius: f64) -> f64 {
        let (min, max) = self.ess_bounds(center - radius, center + radius);
        min.value.abs().max(max.value.abs())
    }

    /// Lower and upper `mu`-envelopes at `t`: essinf and esssup of the law on `[t - mu, t + mu]`.
    pub fn envelopes(&self, mu: f64, t: f64) -> FilledInterval {
        assert!(mu > 0.0, "envelope window must be positive, got {mu}");
        let (min, max) = self.ess_bounds(t - mu, t + mu);
        FilledInterval::new(min.value, max.value)
    }

    /// Filled-in interval `[min, max]` of the one-sided limits: the limit of
    /// the envelopes as the window shrinks to zero.
    pub fn filled_interval(&self, t: f64) -> FilledInterval {
        let (l, r) = self.one_sided_limits(t);
        FilledInterval::new(l.min(r), l.max(r))
    }

    /// `j(t) = int_0^t Theta`, exactly.
    pub fn superpotential_value(&self, t: f64) -> f64 {
        let (lo, hi, sign) = if t >= 0.0 {
            (0.0, t, 1.0)
        } else {
            (t, 0.0, -1.0)
        };
        if lo == hi {
            return 0.0;
        }
        let mut total = 0.0;
        for i in self.piece_index(lo)..self.pieces.len() {
            let (plo, phi) = self.interval(i);
            if plo >= hi {
                break;
            }
            let (l, r) = (plo.max(lo), phi.min(hi));
            if l < r {
                let anti = &self.antiderivatives[i];
                total += anti.eval(r) - anti.eval(l);
            }
        }
        sign * total
    }

    /// Checks `esssup_{t < -t0} Theta <= 0 <= essinf_{t > t0} Theta` and
    /// returns `a = t0 + 1`, `b = esssup_{|s| <= a + 1} |Theta|`.
    pub fn check_rauch(&self, t0: f64) -> Result<RauchCertificate, RauchViolation> {
        assert!(t0 > 0.0, "t0 must be positive, got {t0}");
        let (_, sup_left) = self.ess_bounds(f64::NEG_INFINITY, -t0);
        if sup_left.value > 0.0 {
            return Err(RauchViolation {
                t0,
                side: RauchSide::Negative,
                witness: sup_left.at,
                value: self.eval(sup_left.at),
            });
        }
        let (inf_right, _) = self.ess_bounds(t0, f64::INFINITY);
        if inf_right.value < 0.0 {
            return Err(RauchViolation {
                t0,
                side: RauchSide::Positive,
                witness: inf_right.at,
                value: self.eval(inf_right.at),
            });
        }
        let a = t0 + 1.0;
        Ok(RauchCertificate {
            t0,
            a,
            b: self.abs_sup(0.0, a + 1.0),
        })
    }

    /// Smallest `t0` on the grid `2^k, k = -10..=20` that passes [`check_rauch`](Self::check_rauch).
    pub fn find_rauch_threshold(&self) -> Option<RauchCertificate> {
        (-10..=20)
            .map(|k| 2f64.powi(k))
            .find_map(|t0| self.check_rauch(t0).ok())
    }

    /// `Theta - alpha`.
    pub fn shift_alpha(&self, alpha: f64) -> JumpFunction {
        JumpFunction::new(
            self.breakpoints.clone(),
            self.pieces.iter().map(|p| p.shifted(alpha)).collect(),
        )
        .expect("shift keeps a valid definition")
    }

    /// `factor * Theta`.
    pub fn scaled(&self, factor: f64) -> JumpFunction {
        JumpFunction::new(
            self.breakpoints.clone(),
            self.pieces
                .iter()
                .map(|p| Poly::new(p.coeffs().iter().map(|c| factor * c).collect()))
                .collect(),
        )
        .expect("scaling keeps a valid definition")
    }

    /// Pointwise sum of two laws, with the union of breakpoints.
    pub fn add(&self, other: &JumpFunction) -> JumpFunction {
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let mut pieces = Vec::with_capacity(bps.len() + 1);
        for i in 0..=bps.len() {
            let lo = if i == 0 {
                f64::NEG_INFINITY
            } else {
                bps[i - 1]
            };
            let hi = bps.get(i).copied().unwrap_or(f64::INFINITY);
            let probe = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            };
            let p = &self.pieces[self.piece_index(probe)];
            let q = &other.pieces[other.piece_index(probe)];
            let n = p.coeffs().len().max(q.coeffs().len());
            let sum = (0..n)
                .map(|k| p.coeffs().get(k).unwrap_or(&0.0) + q.coeffs().get(k).unwrap_or(&0.0))
                .collect();
            pieces.push(Poly::new(sum));
        }
        JumpFunction::new(bps, pieces).expect("sum of valid laws")
    }

    pub fn to_definition(&self) -> LawDefinition {
        LawDefinition {
            breakpoints: self.breakpoints.clone(),
            pieces: (0..self.pieces.len())
                .map(|i| {
                    let (lo, hi) = self.interval(i);
                    PieceDefinition {
                        interval: [lo.is_finite().then_some(lo), hi.is_finite().then_some(hi)],
                        // `+ 0.0` turns -0.0 into 0.0 so the serialized form is canonical
                        poly: self.pieces[i].coeffs().iter().map(|c| c + 0.0).collect(),
                    }
                })
                .collect(),
        }
    }
}

/// On-disk form of a law. Unbounded interval ends are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawDefinition {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<PieceDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDefinition {
    pub interval: [Option<f64>; 2],
    pub poly: Vec<f64>,
}

impl TryFrom<LawDefinition> for JumpFunction {
    type Error = SuperpotentialError;

    fn try_from(def: LawDefinition) -> Result<Self, Self::Error> {
        let n = def.breakpoints.len();
        if def.pieces.len() != n + 1 {
            return Err(SuperpotentialError::InvalidDefinition(format!(
                "{n} breakpoints need {} pieces, got {}",
                n + 1,
                def.pieces.len()
            )));
        }
        for (i, piece) in def.pieces.iter().enumerate() {
            let lo = if i == 0 {
                None
            } else {
                Some(def.breakpoints[i - 1])
            };
            let hi = def.breakpoints.get(i).copied();
            if piece.interval != [lo, hi] {
                return Err(SuperpotentialError::InvalidDefinition(format!(
                    "piece {i} has interval {:?}, expected {:?} from the breakpoints",
                    piece.interval,
                    [lo, hi]
                )));
            }
            if piece.poly.is_empty() {
                return Err(SuperpotentialError::InvalidDefinition(format!(
                    "piece {i} has no coefficients"
                )));
            }
        }
        JumpFunction::new(
            def.breakpoints,
            def.pieces.into_iter().map(|p| Poly::new(p.poly)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orifice() -> JumpFunction {
        JumpFunction::orifice(2.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(JumpFunction::sign().eval(0.3), 1.0);
        assert_eq!(orifice().eval(0.5), 1.0);
        let at_jump = JumpFunction::sign().eval_detailed(0.0);
        assert_eq!(at_jump.value, 1.0);
        assert!(at_jump.right_limit_at_jump);
        assert!(!JumpFunction::sign().eval_detailed(0.1).right_limit_at_jump);
    }

    #[test]
    fn one_sided_limit_examples() {
        assert_eq!(JumpFunction::sign().one_sided_limits(0.0), (-1.0, 1.0));
        assert_eq!(orifice().one_sided_limits(1.0), (2.0, 0.0));
        assert_eq!(
            JumpFunction::polynomial(vec![0.0, 0.0, 1.0]).one_sided_limits(3.0),
            (9.0, 9.0)
        );
    }

    #[test]
    fn stored_limits_match_pieces() {
        let law = JumpFunction::orifice(3.0, 0.5, 2.0).unwrap();
        for (i, &b) in law.breakpoints().iter().enumerate() {
            assert!((law.left_limits()[i] - law.eval(b - 1e-12)).abs() < 1e-9);
            assert!((law.right_limits()[i] - law.eval(b + 1e-12)).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_examples() {
        let s = JumpFunction::sign();
        assert_eq!(s.envelopes(0.5, 0.2), FilledInterval::new(-1.0, 1.0));
        assert_eq!(s.envelopes(0.1, 0.5), FilledInterval::new(1.0, 1.0));
        // window touching the jump in a single point ignores the other side
        assert_eq!(s.envelopes(0.1, 0.1), FilledInterval::new(1.0, 1.0));
    }

    #[test]
    fn orifice_envelope_matches_grid_scan() {
        let law = orifice();
        let (mu, t) = (0.25, 1.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let n = 5000;
        for k in 0..=n {
            let s = t - mu + 2.0 * mu * k as f64 / n as f64;
            let v = law.eval(s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let env = law.envelopes(mu, t);
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0).abs() < 1e-3);
        assert_eq!(env, FilledInterval::new(0.0, 2.0));
    }

    #[test]
    fn filled_interval_examples() {
        assert_eq!(
            JumpFunction::sign().filled_interval(0.0),
            FilledInterval::new(-1.0, 1.0)
        );
        assert_eq!(
            orifice().filled_interval(1.0),
            FilledInterval::new(0.0, 2.0)
        );
        assert_eq!(
            orifice().filled_interval(0.5),
            FilledInterval::new(1.0, 1.0)
        );
    }

    #[test]
    fn superpotential_examples() {
        assert_eq!(JumpFunction::sign().superpotential_value(-2.0), 2.0);
        assert!((orifice().superpotential_value(0.5) - 0.25).abs() < 1e-15);
        assert!((orifice().superpotential_value(3.0) - 1.0).abs() < 1e-15);
        assert_eq!(orifice().superpotential_value(-3.0), 0.0);
    }

    #[test]
    fn rauch_examples() {
        let cert = JumpFunction::sign().check_rauch(0.5).unwrap();
        assert_eq!((cert.a, cert.b), (1.5, 1.0));
        let err = JumpFunction::linear(-1.0).check_rauch(2.0).unwrap_err();
        assert!(err.value * err.witness < 0.0);
        let cert = orifice().check_rauch(1.5).unwrap();
        assert_eq!((cert.a, cert.b), (2.5, 2.0));
        let positive_side = JumpFunction::polynomial(vec![-1.0])
            .check_rauch(1.0)
            .unwrap_err();
        assert_eq!(positive_side.side, RauchSide::Positive);
    }

    #[test]
    fn orifice_certificate_b_matches_grid_scan() {
        let law = orifice();
        let n = 70_000;
        let scan = (0..=n)
            .map(|k| law.eval(-3.5 + 7.0 * k as f64 / n as f64).abs())
            .fold(0.0, f64::max);
        let cert = law.check_rauch(1.5).unwrap();
        assert!(scan <= cert.b && cert.b - scan < 1e-3);
    }

    #[test]
    fn shift_examples() {
        let shifted = JumpFunction::sign().shift_alpha(1.0);
        assert_eq!(shifted.pieces()[0].coeffs(), &[-2.0]);
        assert_eq!(shifted.pieces()[1].coeffs(), &[0.0]);
        let law = JumpFunction::orifice(2.0, 0.5, 1.5).unwrap();
        assert_eq!(law.shift_alpha(0.375).shift_alpha(-0.375), law);

        // sign + 3 sits in the band  esssup_{t<-t0} <= 3 <= essinf_{t>t0}
        let banded = JumpFunction::sign().add(&JumpFunction::constant(3.0));
        assert!(banded.check_rauch(1.0).is_err());
        assert!(banded.shift_alpha(3.0).check_rauch(1.0).is_ok());
    }

    #[test]
    fn bump_shape() {
        let b = JumpFunction::bump(0.0, 1.0, 2.0).unwrap();
        assert_eq!(b.eval(0.0), 2.0);
        assert!((b.eval(0.5) - 2.0 * 0.75f64.powi(2)).abs() < 1e-14);
        assert_eq!(b.one_sided_limits(1.0), (0.0, 0.0));
    }

    #[test]
    fn definition_round_trip_and_validation() {
        let law = orifice();
        let json = serde_json::to_string(&law.to_definition()).unwrap();
        let back: LawDefinition = serde_json::from_str(&json).unwrap();
        assert_eq!(JumpFunction::try_from(back).unwrap(), law);

        let bad = r#"{"breakpoints":[0.0],"pieces":[{"interval":[null,1.0],"poly":[0]},{"interval":[0.0,null],"poly":[1]}]}"#;
        let def: LawDefinition = serde_json::from_str(bad).unwrap();
        assert!(JumpFunction::try_from(def).is_err());
        assert!(JumpFunction::new(vec![1.0, 0.0], vec![Poly::constant(0.0); 3]).is_err());
    }
}
