//! Regularised Galerkin problem `A c + B[c] + T^T W Theta_eps(T c) = F` and its
//! solution by damped Newton, plus continuation in `eps` and the a-priori,
//! inclusion and integrability checks run on converged states.

mod checks;
mod continuation;

pub use checks::{
    apriori_check, energy_identity, inclusion_check, uniform_integrability_check, AprioriReport,
    EnergyIdentity, InclusionReport, NodeInclusion, UiReport, UiWindow, UI_DELTAS,
};
pub use continuation::{
    continuation_solve, ContinuationRun, ContinuationSchedule, InclusionOptions, ProblemFamily,
    StepRecord, EPSILON_FLOOR,
};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galerkin::{GalerkinError, GalerkinSystem};
use crate::superpotential::{
    JumpFunction, Mollifier, RauchCertificate, RauchViolation, SuperpotentialError,
};

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error(
        "Newton did not converge: best residual {best_residual:.3e} after {iterations} iterations"
    )]
    NonConvergence {
        best_residual: f64,
        iterations: usize,
        best: Box<SolveResult>,
    },
    #[error("singular Jacobian at iteration {iteration} (residual {residual:.3e})")]
    SingularJacobian { iteration: usize, residual: f64 },
    #[error("continuation step {step} failed: {source}")]
    StepFailed {
        step: usize,
        completed: Vec<StepRecord>,
        #[source]
        source: Box<SolverError>,
    },
    #[error("invalid continuation schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Rauch(#[from] RauchViolation),
    #[error(transparent)]
    Galerkin(#[from] GalerkinError),
    #[error(transparent)]
    Superpotential(#[from] SuperpotentialError),
}

impl SolverError {
    /// Best iterate carried by a non-convergence error, looking through continuation failures.
    pub fn best_result(&self) -> Option<&SolveResult> {
        match self {
            SolverError::NonConvergence { best, .. } => Some(best),
            SolverError::StepFailed { source, .. } => source.best_result(),
            _ => None,
        }
    }
}

/// Finite-dimensional regularised problem: the assembled system with its load,
/// a certified boundary law and the mollifier.
#[derive(Debug, Clone)]
pub struct RegularizedProblem {
    system: GalerkinSystem,
    theta: JumpFunction,
    moll: Mollifier,
    certificate: RauchCertificate,
}

impl RegularizedProblem {
    /// Certifies `theta` with threshold `t0` and attaches the mollifier of width `epsilon`.
    pub fn new(
        system: GalerkinSystem,
        theta: JumpFunction,
        epsilon: f64,
        t0: f64,
    ) -> Result<Self, SolverError> {
        let certificate = theta.check_rauch(t0)?;
        let moll = Mollifier::new(epsilon)?;
        Ok(RegularizedProblem {
            system,
            theta,
            moll,
            certificate,
        })
    }

    pub fn system(&self) -> &GalerkinSystem {
        &self.system
    }

    pub fn theta(&self) -> &JumpFunction {
        &self.theta
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.moll
    }

    pub fn epsilon(&self) -> f64 {
        self.moll.epsilon()
    }

    pub fn certificate(&self) -> &RauchCertificate {
        &self.certificate
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    /// `Theta_eps` at each normal-trace sample.
    pub fn boundary_law(&self, u_n: &[f64]) -> Vec<f64> {
        u_n.iter()
            .map(|&u| self.moll.mollify(&self.theta, u))
            .collect()
    }

    fn boundary_law_derivative(&self, u_n: &[f64]) -> Vec<f64> {
        u_n.iter()
            .map(|&u| self.moll.mollify_derivative(&self.theta, u))
            .collect()
    }

    /// Residual assembled from given multiplier samples `xi` instead of `Theta_eps(T c)`.
    pub fn residual_with_multiplier(&self, c: &[f64], xi: &[f64]) -> Vec<f64> {
        let sys = &self.system;
        let mut r = sys.apply_a(c);
        for (ri, bi) in r.iter_mut().zip(sys.convection(c)) {
            *ri += bi;
        }
        for (ri, ki) in r.iter_mut().zip(sys.trace_transpose_weighted(xi)) {
            *ri += ki;
        }
        for (ri, fi) in r.iter_mut().zip(sys.load()) {
            *ri -= fi;
        }
        r
    }

    /// `A c + B[c] + T^T W Theta_eps(T c) - F`.
    pub fn residual(&self, c: &[f64]) -> Vec<f64> {
        let xi = self.boundary_law(&self.system.normal_trace(c));
        self.residual_with_multiplier(c, &xi)
    }

    /// `A + dB[c] + T^T diag(w Theta_eps'(T c)) T`.
    pub fn jacobian(&self, c: &[f64]) -> DMatrix<f64> {
        let sys = &self.system;
        let dxi = self.boundary_law_derivative(&sys.normal_trace(c));
        let mut jac = sys.convection_jacobian(c);
        jac += sys.trace_gram_weighted(&dxi);
        for (i, a) in sys.a_diag().iter().enumerate() {
            jac[(i, i)] += a;
        }
        jac
    }

    /// Evaluates everything a [`SolveResult`] stores at the coefficients `c`.
    pub fn evaluate(&self, c: Vec<f64>, newton_iters: usize, converged: bool) -> SolveResult {
        let u_n = self.system.normal_trace(&c);
        let xi = self.boundary_law(&u_n);
        let r = self.residual_with_multiplier(&c, &xi);
        let eps = self.epsilon();
        let jump_adjacent = u_n
            .iter()
            .map(|u| self.theta.breakpoints().iter().any(|b| (u - b).abs() < eps))
            .collect();
        let mut result = SolveResult {
            epsilon: eps,
            modes: self.system.basis().modes().to_vec(),
            residual_norm: norm(&r),
            coeffs: c,
            u_n_samples: u_n,
            xi_samples: xi,
            jump_adjacent,
            newton_iters,
            status: if converged {
                SolveStatus::Converged
            } else {
                SolveStatus::BestIterate
            },
            apriori: None,
            energy: None,
        };
        if converged {
            result.apriori = Some(apriori_check(&result, self));
            result.energy = Some(energy_identity(&result, self));
        }
        result
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iteration stopped without meeting the tolerance; the best iterate is reported.
    BestIterate,
}

/// Discrete solution pair: velocity coefficients and boundary multiplier samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub epsilon: f64,
    pub modes: Vec<(u32, u32)>,
    pub coeffs: Vec<f64>,
    pub residual_norm: f64,
    pub u_n_samples: Vec<f64>,
    /// `Theta_eps(u_N)` at each boundary node.
    pub xi_samples: Vec<f64>,
    /// Nodes whose normal velocity lies within `eps` of a jump of the law.
    pub jump_adjacent: Vec<bool>,
    pub newton_iters: usize,
    pub status: SolveStatus,
    pub apriori: Option<AprioriReport>,
    pub energy: Option<EnergyIdentity>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant on `||r||`.
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iters: 100,
            armijo: 1e-4,
            min_step: 1e-10,
        }
    }
}

impl NewtonOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        NewtonOptions {
            tol,
            max_iters,
            ..Default::default()
        }
    }
}

/// Solves `J delta = -r`; `None` when the LU factor has a vanishing pivot.
fn newton_direction(jac: DMatrix<f64>, r: &[f64]) -> Option<Vec<f64>> {
    let lu = jac.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max_pivot = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if max_pivot == 0.0 || diag.iter().any(|d| d.abs() <= 1e-14 * max_pivot) {
        return None;
    }
    let rhs = DVector::from_iterator(r.len(), r.iter().map(|x| -x));
    let delta = lu.solve(&rhs)?;
    delta
        .iter()
        .all(|x| x.is_finite())
        .then(|| delta.iter().copied().collect())
}

/// Fixed-point step `c <- A^{-1}(F - B[c] - K(c))`.
fn fixed_point_step(problem: &RegularizedProblem, c: &[f64]) -> Vec<f64> {
    let sys = problem.system();
    let xi = problem.boundary_law(&sys.normal_trace(c));
    let b = sys.convection(c);
    let k = sys.trace_transpose_weighted(&xi);
    sys.load()
        .iter()
        .zip(b)
        .zip(k)
        .zip(sys.a_diag())
        .map(|(((f, b), k), a)| (f - b - k) / a)
        .collect()
}

/// Damped Newton with Armijo backtracking on the residual norm. Falls back to
/// one fixed-point step when the Jacobian is singular.
pub fn solve_newton(
    problem: &RegularizedProblem,
    init: &[f64],
    opts: &NewtonOptions,
) -> Result<SolveResult, SolverError> {
    assert!(opts.tol > 0.0, "tolerance must be positive");
    if init.len() != problem.len() {
        return Err(GalerkinError::DimensionMismatch {
            expected: problem.len(),
            got: init.len(),
        }
        .into());
    }
    let mut c = init.to_vec();
    let mut r = problem.residual(&c);
    let mut rn = norm(&r);
    let (mut best_c, mut best_rn) = (c.clone(), rn);

    for iter in 0..opts.max_iters {
        if rn <= opts.tol {
            return Ok(problem.evaluate(c, iter, true));
        }
        let candidate = match newton_direction(problem.jacobian(&c), &r) {
            Some(delta) => line_search(problem, &c, &delta, rn, opts),
            None => None,
        };
        let (next_c, next_r, next_rn) = match candidate {
            Some(step) => step,
            None => {
                let fp = fixed_point_step(problem, &c);
                let fr = problem.residual(&fp);
                let frn = norm(&fr);
                if !(frn < rn) {
                    if problem
                        .jacobian(&c)
                        .lu()
                        .u()
                        .diagonal()
                        .iter()
                        .any(|d| d.abs() < 1e-300)
                    {
                        return Err(SolverError::SingularJacobian {
                            iteration: iter,
                            residual: rn,
                        });
                    }
                    break;
                }
                (fp, fr, frn)
            }
        };
        c = next_c;
        r = next_r;
        rn = next_rn;
        if rn < best_rn {
            best_rn = rn;
            best_c.clone_from(&c);
        }
    }
    if rn <= opts.tol {
        return Ok(problem.evaluate(c, opts.max_iters, true));
    }
    let best = problem.evaluate(best_c, opts.max_iters, false);
    Err(SolverError::NonConvergence {
        best_residual: best.residual_norm,
        iterations: opts.max_iters,
        best: Box::new(best),
    })
}

type Step = (Vec<f64>, Vec<f64>, f64);

fn line_search(
    problem: &RegularizedProblem,
    c: &[f64],
    delta: &[f64],
    rn: f64,
    opts: &NewtonOptions,
) -> Option<Step> {
    let mut lambda = 1.0;
    let mut best: Option<Step> = None;
    while lambda >= opts.min_step {
        let trial: Vec<f64> = c.iter().zip(delta).map(|(c, d)| c + lambda * d).collect();
        let tr = problem.residual(&trial);
        let trn = norm(&tr);
        if trn <= (1.0 - opts.armijo * lambda) * rn {
            return Some((trial, tr, trn));
        }
        if trn < rn && best.as_ref().is_none_or(|b| trn < b.2) {
            best = Some((trial, tr, trn));
        }
        lambda *= 0.5;
    }
    best
}

/// Newton from a deterministic zero start and from seeded random starts; returns
/// every converged solution, dropping duplicates closer than `1e-6` in the V-norm.
pub fn solve_multistart(
    problem: &RegularizedProblem,
    seeds: &[u64],
    opts: &NewtonOptions,
) -> Vec<SolveResult> {
    let basis = problem.system().basis();
    let f = basis.dual_norm(problem.system().load());
    let cert = problem.certificate();
    let nu = problem.system().nu();
    let radius = (f + (f * f + 4.0 * nu * cert.a * cert.b * 4.0).sqrt()) / (2.0 * nu);
    let mut starts = vec![vec![0.0; problem.len()]];
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = radius.max(1e-3) / (problem.len() as f64).sqrt();
        starts.push(
            (0..problem.len())
                .map(|i| rng.random_range(-1.0..1.0) * scale / basis.norm_weight(i).sqrt())
                .collect(),
        );
    }
    let mut found: Vec<SolveResult> = Vec::new();
    for start in starts {
        if let Ok(res) = solve_newton(problem, &start, opts) {
            let duplicate = found.iter().any(|f| {
                let diff: Vec<f64> = f
                    .coeffs
                    .iter()
                    .zip(&res.coeffs)
                    .map(|(a, b)| a - b)
                    .collect();
                basis.v_norm(&diff) < 1e-6
            });
            if !duplicate {
                found.push(res);
            }
        }
    }
    found
}
