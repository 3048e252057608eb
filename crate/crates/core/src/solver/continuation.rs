use serde::{Deserialize, Serialize};

use super::checks::{inclusion_check, uniform_integrability_check, InclusionReport, UiReport};
use super::{solve_newton, NewtonOptions, RegularizedProblem, SolveResult, SolverError};
use crate::galerkin::{assemble, ForceSpec, StreamBasis};
use crate::quadrature::{QuadratureRule, QuadratureSpec};
use crate::superpotential::JumpFunction;

/// Smallest admissible regularisation width.
pub const EPSILON_FLOOR: f64 = 1e-4;

/// Ordered `(eps, n_max_energy)` steps with `eps` strictly decreasing in `[1e-4, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, u32)>", into = "Vec<(f64, u32)>")]
pub struct ContinuationSchedule {
    steps: Vec<(f64, u32)>,
}

impl ContinuationSchedule {
    pub fn new(steps: Vec<(f64, u32)>) -> Result<Self, SolverError> {
        if steps.is_empty() {
            return Err(SolverError::InvalidSchedule("no steps".into()));
        }
        for (i, &(eps, n)) in steps.iter().enumerate() {
            if !(eps.is_finite() && (EPSILON_FLOOR..1.0).contains(&eps)) {
                return Err(SolverError::InvalidSchedule(format!(
                    "step {i}: eps = {eps} outside [{EPSILON_FLOOR}, 1)"
                )));
            }
            if n == 0 {
                return Err(SolverError::InvalidSchedule(format!(
                    "step {i}: empty mode set"
                )));
            }
            if i > 0 && eps >= steps[i - 1].0 {
                return Err(SolverError::InvalidSchedule(format!(
                    "step {i}: eps must strictly decrease"
                )));
            }
        }
        Ok(ContinuationSchedule { steps })
    }

    /// All steps at one mode cutoff.
    pub fn fixed_modes(epsilons: &[f64], n_max_energy: u32) -> Result<Self, SolverError> {
        Self::new(epsilons.iter().map(|&e| (e, n_max_energy)).collect())
    }

    pub fn steps(&self) -> &[(f64, u32)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl TryFrom<Vec<(f64, u32)>> for ContinuationSchedule {
    type Error = SolverError;
    fn try_from(steps: Vec<(f64, u32)>) -> Result<Self, Self::Error> {
        Self::new(steps)
    }
}

impl From<ContinuationSchedule> for Vec<(f64, u32)> {
    fn from(s: ContinuationSchedule) -> Self {
        s.steps
    }
}

/// Data shared by every step of a continuation: viscosity, law, threshold and force.
#[derive(Debug, Clone)]
pub struct ProblemFamily {
    pub nu: f64,
    pub theta: JumpFunction,
    pub t0: f64,
    pub force: ForceSpec,
}

impl ProblemFamily {
    pub fn new(
        nu: f64,
        theta: JumpFunction,
        t0: f64,
        force: ForceSpec,
    ) -> Result<Self, SolverError> {
        force.validate()?;
        theta.check_rauch(t0)?;
        Ok(ProblemFamily {
            nu,
            theta,
            t0,
            force,
        })
    }

    /// Assembles the problem on the basis `{k^2 + l^2 <= n_max_energy}`.
    pub fn problem(
        &self,
        epsilon: f64,
        n_max_energy: u32,
    ) -> Result<RegularizedProblem, SolverError> {
        let basis = StreamBasis::build(n_max_energy)?;
        self.problem_on(epsilon, &basis)
    }

    pub fn problem_on(
        &self,
        epsilon: f64,
        basis: &StreamBasis,
    ) -> Result<RegularizedProblem, SolverError> {
        let quad = QuadratureRule::new(QuadratureSpec::for_max_frequency(basis.max_frequency()));
        let load = self.force.load(basis, &quad);
        let system = assemble(basis, self.nu, &quad)?.with_load(load)?;
        RegularizedProblem::new(system, self.theta.clone(), epsilon, self.t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epsilon: f64,
    pub n_max_energy: u32,
    pub result: SolveResult,
    /// `||c_step - c_prev||_V` with the previous coefficients injected into this basis.
    pub cauchy_diff: Option<f64>,
    pub integrability: UiReport,
    /// Whether the warm start failed and the step was solved from zero.
    pub cold_restart: bool,
}

/// Settings of the inclusion check run after the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionOptions {
    pub tol_u: f64,
    pub tol_xi: f64,
    /// Number of final steps whose multipliers are checked.
    pub steps: usize,
}

impl Default for InclusionOptions {
    fn default() -> Self {
        InclusionOptions {
            tol_u: 0.05,
            tol_xi: 1e-3,
            steps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRun {
    pub steps: Vec<StepRecord>,
    pub inclusion: Option<InclusionReport>,
}

impl ContinuationRun {
    pub fn final_result(&self) -> &SolveResult {
        &self
            .steps
            .last()
            .expect("a run has at least one step")
            .result
    }
}

/// Solves the schedule in order, warm-starting each step from the previous
/// solution injected by mode matching. A failed warm start is retried from zero.
pub fn continuation_solve(
    family: &ProblemFamily,
    schedule: &ContinuationSchedule,
    opts: &NewtonOptions,
    inclusion: Option<InclusionOptions>,
) -> Result<ContinuationRun, SolverError> {
    let mut records: Vec<StepRecord> = Vec::with_capacity(schedule.len());
    let mut prev: Option<(StreamBasis, Vec<f64>)> = None;
    let mut boundary = Vec::new();
    for (step, &(eps, n)) in schedule.steps().iter().enumerate() {
        let fail = |source: SolverError, completed: &[StepRecord]| SolverError::StepFailed {
            step,
            completed: completed.to_vec(),
            source: Box::new(source),
        };
        let problem = family.problem(eps, n).map_err(|e| fail(e, &records))?;
        let basis = problem.system().basis().clone();
        let init = match &prev {
            Some((b, c)) => basis.inject(c, b),
            None => vec![0.0; basis.len()],
        };
        let (result, cold_restart) = match solve_newton(&problem, &init, opts) {
            Ok(r) => (r, false),
            Err(warm_err) if prev.is_some() => {
                match solve_newton(&problem, &vec![0.0; basis.len()], opts) {
                    Ok(r) => (r, true),
                    Err(_) => return Err(fail(warm_err, &records)),
                }
            }
            Err(e) => return Err(fail(e, &records)),
        };
        let cauchy_diff = prev.as_ref().map(|(b, c)| {
            let injected = basis.inject(c, b);
            let diff: Vec<f64> = result
                .coeffs
                .iter()
                .zip(&injected)
                .map(|(x, y)| x - y)
                .collect();
            basis.v_norm(&diff)
        });
        let integrability = uniform_integrability_check(&result, &problem);
        prev = Some((basis, result.coeffs.clone()));
        boundary = problem.system().boundary().to_vec();
        records.push(StepRecord {
            epsilon: eps,
            n_max_energy: n,
            result,
            cauchy_diff,
            integrability,
            cold_restart,
        });
    }
    let inclusion = inclusion
        .filter(|o| o.steps >= 2 && records.len() >= 2)
        .map(|o| {
            let k = o.steps.min(records.len());
            let tail: Vec<SolveResult> = records[records.len() - k..]
                .iter()
                .map(|r| r.result.clone())
                .collect();
            inclusion_check(&tail, &family.theta, o.tol_u, o.tol_xi, &boundary)
        });
    Ok(ContinuationRun {
        steps: records,
        inclusion,
    })
}
