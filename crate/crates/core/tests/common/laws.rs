//! Random piecewise-polynomial laws and the pointwise properties every law
//! and mollification must satisfy.

use rand::{Rng, RngExt};

use nshvi::superpotential::{JumpFunction, Mollifier, Poly};

/// Relative slack for quantities computed by quadrature (mollified values).
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Window used to check that envelopes shrink onto the filled-in interval.
pub const SHRINK_MU: f64 = 1e-9;
pub const SHRINK_TOL: f64 = 1e-6;
/// Points of the grid on `[-s0, s0]` for the sup bound of the mollified law.
pub const SUP_GRID: usize = 21;

/// Builds a law from unsorted candidate breakpoints (closer than `0.05` are
/// merged) and one coefficient vector per piece.
pub fn build_law(raw_breaks: &[f64], coeffs: &[Vec<f64>]) -> JumpFunction {
    let mut bps = raw_breaks.to_vec();
    bps.sort_by(f64::total_cmp);
    let mut kept: Vec<f64> = Vec::new();
    for b in bps {
        if kept.last().is_none_or(|&l| b - l >= 0.05) {
            kept.push(b);
        }
    }
    let pieces = (0..=kept.len())
        .map(|i| Poly::new(coeffs[i % coeffs.len()].clone()))
        .collect();
    JumpFunction::new(kept, pieces).expect("valid random law")
}

/// One randomized `(Theta, t, t', eps, mu)` draw.
#[derive(Debug, Clone)]
pub struct LawSample {
    pub theta: JumpFunction,
    pub t: f64,
    /// Offset of `t'` from `t` in units of `mu / 2`, in `[-1, 1]`.
    pub near: f64,
    /// Second point of the Lipschitz pair, `t + far`.
    pub far: f64,
    /// Regularisation width in `(0, 1)`.
    pub eps: f64,
    pub mu: f64,
    /// `mu2 > mu` for the monotonicity check.
    pub mu2: f64,
    pub s0: f64,
}

/// Draws a law with at most five jumps and cubic pieces, plus sample points.
/// Half of the draws place `t` within `0.2` of a breakpoint.
pub fn random_sample<R: Rng>(rng: &mut R) -> LawSample {
    let nb = rng.random_range(0..=5usize);
    let breaks: Vec<f64> = (0..nb).map(|_| rng.random_range(-4.0..4.0)).collect();
    let coeffs: Vec<Vec<f64>> = (0..=nb)
        .map(|_| {
            let deg = rng.random_range(0..=3usize);
            (0..=deg).map(|_| rng.random_range(-3.0..3.0)).collect()
        })
        .collect();
    let theta = build_law(&breaks, &coeffs);
    let t = match theta.breakpoints() {
        bps if !bps.is_empty() && rng.random_bool(0.5) => {
            bps[rng.random_range(0..bps.len())] + rng.random_range(-0.2..0.2)
        }
        _ => rng.random_range(-5.0..5.0),
    };
    let mu = rng.random_range(0.01..2.0);
    LawSample {
        theta,
        t,
        near: rng.random_range(-1.0..=1.0),
        far: rng.random_range(-2.0..2.0),
        eps: rng.random_range(1e-3..0.999),
        mu,
        mu2: mu * (1.0 + rng.random_range(1e-3..3.0)),
        s0: rng.random_range(0.1..5.0),
    }
}

/// Names of the properties of criterion 1.
pub const PROPERTIES: [&str; 5] = [
    "envelope monotonicity",
    "sandwich",
    "Lipschitz estimate",
    "sup bound of the mollified law",
    "filled-interval identities",
];

/// Which of the properties fail for one sample; each entry is
/// `(property index, detail)`.
pub fn violations(s: &LawSample) -> Vec<(usize, String)> {
    let th = &s.theta;
    let mut out = Vec::new();

    // envelopes widen with the window
    let (e1, e2) = (th.envelopes(s.mu, s.t), th.envelopes(s.mu2, s.t));
    if !(e2.lower <= e1.lower && e1.upper <= e2.upper && e1.lower <= e1.upper) {
        out.push((
            0,
            format!(
                "t = {}, mu = {} -> {e1:?}, mu2 = {} -> {e2:?}",
                s.t, s.mu, s.mu2
            ),
        ));
    }

    // eps < mu/2 and |t' - t| <= mu/2 put Theta_eps(t') between the envelopes at t
    let eps_s = s.eps * 0.5 * s.mu;
    let t1 = s.t + s.near * 0.5 * s.mu;
    let moll = Mollifier::new(eps_s).unwrap();
    let v = moll.mollify(th, t1);
    let slack = QUAD_REL_TOL * (1.0 + th.abs_sup(s.t, s.mu));
    if !(e1.lower - slack <= v && v <= e1.upper + slack) {
        out.push((
            1,
            format!(
                "t = {}, t' = {t1}, eps = {eps_s}, mu = {}: {v} outside {e1:?}",
                s.t, s.mu
            ),
        ));
    }

    // |Theta_eps(t) - Theta_eps(t'')| <= S ||h_eps'|| |t - t''| (|t - t''| + 2 eps)
    let moll = Mollifier::new(s.eps).unwrap();
    let t2 = s.t + s.far;
    let (lo, hi) = (s.t.min(t2), s.t.max(t2));
    let sup = th.abs_sup(0.5 * (lo + hi), 0.5 * (hi - lo) + s.eps);
    let bound = sup * moll.derivative_sup_norm() * (hi - lo) * (hi - lo + 2.0 * s.eps);
    let diff = (moll.mollify(th, s.t) - moll.mollify(th, t2)).abs();
    if diff > bound + QUAD_REL_TOL * (1.0 + sup) {
        out.push((
            2,
            format!("t = {}, t'' = {t2}, eps = {}: {diff} > {bound}", s.t, s.eps),
        ));
    }

    // sup_{|s| <= s0} |Theta_eps(s)| <= esssup_{|s| <= s0 + 1} |Theta|
    let cap = th.abs_sup(0.0, s.s0 + 1.0);
    let mut pts: Vec<f64> = (0..SUP_GRID)
        .map(|i| -s.s0 + 2.0 * s.s0 * i as f64 / (SUP_GRID - 1) as f64)
        .collect();
    pts.extend(th.breakpoints().iter().copied().filter(|b| b.abs() <= s.s0));
    if let Some(worst) = pts
        .iter()
        .map(|&p| (p, moll.mollify(th, p).abs()))
        .find(|&(_, val)| val > cap + QUAD_REL_TOL * (1.0 + cap))
    {
        out.push((
            3,
            format!(
                "s0 = {}, eps = {}: |Theta_eps({})| = {} > {cap}",
                s.s0, s.eps, worst.0, worst.1
            ),
        ));
    }

    // filled interval = [min, max] of the one-sided limits, contained in every
    // envelope and the limit of envelopes as the window shrinks
    let mut probe: Vec<f64> = th.breakpoints().to_vec();
    probe.push(s.t);
    for &p in &probe {
        let (l, r) = th.one_sided_limits(p);
        let f = th.filled_interval(p);
        let env = th.envelopes(s.mu, p);
        let small = th.envelopes(SHRINK_MU, p);
        let scale = 1.0 + l.abs().max(r.abs());
        let ok = f.lower == l.min(r)
            && f.upper == l.max(r)
            && env.lower <= f.lower
            && f.upper <= env.upper
            && (small.lower - f.lower).abs() <= SHRINK_TOL * scale
            && (small.upper - f.upper).abs() <= SHRINK_TOL * scale
            && (th.breakpoints().contains(&p) || l == r);
        if !ok {
            out.push((
                4,
                format!(
                    "t = {p}: limits ({l}, {r}), filled {f:?}, envelope {env:?}, shrunk {small:?}"
                ),
            ));
        }
    }
    out
}
