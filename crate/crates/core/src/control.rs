//! Distributed optimal control: minimise a tracking objective over forces
//! `f = sum g_i u_i` in a Gram-norm ball, with the continuation solver as the
//! solution map.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SolveSettings;
use crate::galerkin::{ForceSpec, StreamBasis};
use crate::solver::{continuation_solve, ContinuationRun, SolveResult, SolverError};
use crate::superpotential::JumpFunction;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("solve failed for control {g:?}: {source}")]
    Solve {
        g: Vec<f64>,
        #[source]
        source: SolverError,
    },
    #[error("evaluation budget of {budget} exhausted; best value {:.3e}", best.value)]
    BudgetExhausted {
        budget: usize,
        best: Box<OptimResult>,
    },
    #[error("invalid control problem: {0}")]
    Invalid(String),
}

/// The first `m` velocity fields of the solver basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpace {
    basis: StreamBasis,
    m: usize,
}

impl ControlSpace {
    pub fn new(n_max_energy: u32, m: usize) -> Result<Self, ControlError> {
        let basis =
            StreamBasis::build(n_max_energy).map_err(|e| ControlError::Invalid(e.to_string()))?;
        if m == 0 || m > basis.len() {
            return Err(ControlError::Invalid(format!(
                "control dimension {m} must lie in 1..={}",
                basis.len()
            )));
        }
        Ok(ControlSpace { basis, m })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &StreamBasis {
        &self.basis
    }

    pub fn modes(&self) -> &[(u32, u32)] {
        &self.basis.modes()[..self.m]
    }

    /// `||f||_{L2}` of `f = sum g_i u_i` (the fields are L2-orthogonal).
    pub fn norm(&self, g: &[f64]) -> f64 {
        g.iter()
            .enumerate()
            .map(|(i, gi)| gi * gi * self.basis.l2_mass(i))
            .sum::<f64>()
            .sqrt()
    }

    /// Load vector on the full basis: `F_i = g_i ||u_i||^2` for `i < m`, else 0.
    pub fn load(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.m, "control length");
        (0..self.basis.len())
            .map(|i| {
                if i < self.m {
                    g[i] * self.basis.l2_mass(i)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn force(&self, g: &[f64]) -> ForceSpec {
        ForceSpec::Sum {
            terms: self
                .modes()
                .iter()
                .zip(g)
                .filter(|(_, &a)| a != 0.0)
                .map(|(&(k, l), &amplitude)| ForceSpec::Mode {
                    k,
                    l,
                    amplitude,
                    normalized: false,
                })
                .collect(),
        }
    }

    /// `sum (a_i - b_i)^2 ||u_i||^2` over the full basis.
    pub fn state_distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| (x - y) * (x - y) * self.basis.l2_mass(i))
            .sum()
    }
}

/// Closed ball `{||f||_{L2} <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub radius: f64,
}

impl AdmissibleSet {
    pub fn new(radius: f64) -> Result<Self, ControlError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ControlError::Invalid(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(AdmissibleSet { radius })
    }

    /// Radial projection onto the ball.
    pub fn project(&self, g: &[f64], space: &ControlSpace) -> Vec<f64> {
        let n = space.norm(g);
        if n <= self.radius {
            g.to_vec()
        } else {
            let s = self.radius / n;
            g.iter().map(|x| x * s).collect()
        }
    }
}

/// `||c - c_d||^2_{L2} + beta ||g||^2_{L2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub target: Vec<f64>,
    pub beta: f64,
}

impl Objective {
    pub fn value(&self, space: &ControlSpace, g: &[f64], c: &[f64]) -> f64 {
        let g_norm = space.norm(g);
        space.state_distance_sq(c, &self.target) + self.beta * g_norm * g_norm
    }
}

/// Solver settings plus the boundary law: everything fixed along a control run.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub space: ControlSpace,
    pub settings: SolveSettings,
    pub theta: JumpFunction,
    pub t0: f64,
}

impl ControlProblem {
    pub fn new(
        space: ControlSpace,
        settings: SolveSettings,
        theta: JumpFunction,
        t0: f64,
    ) -> Result<Self, ControlError> {
        let solver_basis = StreamBasis::build(settings.n_max_energy)
            .map_err(|e| ControlError::Invalid(e.to_string()))?;
        if solver_basis != space.basis {
            return Err(ControlError::Invalid(
                "control space must be built on the solver basis".into(),
            ));
        }
        settings
            .validate()
            .map_err(|e| ControlError::Invalid(e.to_string()))?;
        theta.check_rauch(t0).map_err(|e| ControlError::Solve {
            g: vec![],
            source: e.into(),
        })?;
        Ok(ControlProblem {
            space,
            settings,
            theta,
            t0,
        })
    }

    /// One element of `S(f)`: cold-start continuation from zero along the fixed
    /// schedule, so the map is single-valued along a run. The background force of
    /// the settings is added to the control.
    pub fn solution_map(&self, g: &[f64]) -> Result<ContinuationRun, ControlError> {
        if g.len() != self.space.m || g.iter().any(|x| !x.is_finite()) {
            return Err(ControlError::Invalid(format!(
                "control must have {} finite entries",
                self.space.m
            )));
        }
        let force = ForceSpec::Sum {
            terms: vec![self.settings.force.clone(), self.space.force(g)],
        };
        let wrap = |source| ControlError::Solve {
            g: g.to_vec(),
            source,
        };
        let family = self
            .settings
            .with_force(force)
            .family(self.theta.clone(), self.t0)
            .map_err(wrap)?;
        let schedule = self
            .settings
            .schedule()
            .map_err(|e| ControlError::Invalid(e.to_string()))?;
        continuation_solve(&family, &schedule, &self.settings.newton(), None).map_err(wrap)
    }

    /// Objective at `g`, `+inf` when the solver fails.
    pub fn objective_eval(&self, objective: &Objective, g: &[f64]) -> Evaluation {
        match self.solution_map(g) {
            Ok(run) => {
                let branch_switch = run.steps.iter().any(|s| s.cold_restart);
                let res = run
                    .steps
                    .into_iter()
                    .last()
                    .expect("non-empty schedule")
                    .result;
                Evaluation {
                    value: objective.value(&self.space, g, &res.coeffs),
                    state: Some(res),
                    branch_switch,
                }
            }
            Err(_) => Evaluation {
                value: f64::INFINITY,
                state: None,
                branch_switch: false,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub state: Option<SolveResult>,
    /// A warm start failed somewhere along the continuation and was redone from zero.
    pub branch_switch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimMethod {
    NelderMead,
    ProjectedGradient,
}

fn default_restarts() -> usize {
    2
}

fn default_xtol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub method: OptimMethod,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Initial simplex edge (or gradient step) as a fraction of the radius.
    #[serde(default)]
    pub initial_step: Option<f64>,
    /// Stop once the best value drops to this level.
    #[serde(default)]
    pub target_value: Option<f64>,
    /// Simplex diameter (relative to the radius) below which a restart is triggered.
    #[serde(default = "default_xtol")]
    pub xtol: f64,
    /// Starting control. When absent: zero, or with `seed` a uniform draw from
    /// the ball of half the admissible radius.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl OptimConfig {
    pub fn validate(&self, m: usize) -> Result<(), ControlError> {
        if self.budget == 0 {
            return Err(ControlError::Invalid("budget must be positive".into()));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ControlError::Invalid(
                    "initial_step must be positive".into(),
                ));
            }
        }
        if let Some(g) = &self.start {
            if g.len() != m || g.iter().any(|x| !x.is_finite()) {
                return Err(ControlError::Invalid(format!(
                    "start must have {m} finite entries"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub evaluation: usize,
    pub value: f64,
    pub best: f64,
    pub branch_switch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub g_hat: Vec<f64>,
    pub value: f64,
    pub state: Option<SolveResult>,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
    pub failures: usize,
    pub restarts_used: usize,
}

/// Budgeted evaluator: projects, evaluates in parallel batches, keeps the
/// incumbent and the history.
struct Tracker<'a> {
    problem: &'a ControlProblem,
    objective: &'a Objective,
    adm: &'a AdmissibleSet,
    budget: usize,
    target: f64,
    history: Vec<HistoryEntry>,
    best: (Vec<f64>, f64, Option<SolveResult>),
    failures: usize,
}

impl<'a> Tracker<'a> {
    fn remaining(&self) -> usize {
        self.budget - self.history.len()
    }

    fn done(&self) -> bool {
        self.remaining() == 0 || self.best.1 <= self.target
    }

    /// Evaluates up to the remaining budget; missing entries are `None`.
    fn eval_batch(&mut self, points: Vec<Vec<f64>>) -> Vec<Option<(Vec<f64>, f64)>> {
        let take = points.len().min(self.remaining());
        let projected: Vec<Vec<f64>> = points
            .iter()
            .take(take)
            .map(|g| self.adm.project(g, &self.problem.space))
            .collect();
        let evals: Vec<Evaluation> = projected
            .par_iter()
            .map(|g| self.problem.objective_eval(self.objective, g))
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for (g, e) in projected.into_iter().zip(evals) {
            if !e.value.is_finite() {
                self.failures += 1;
            }
            if e.value < self.best.1 {
                self.best = (g.clone(), e.value, e.state);
            }
            self.history.push(HistoryEntry {
                evaluation: self.history.len() + 1,
                value: e.value,
                best: self.best.1,
                branch_switch: e.branch_switch,
            });
            out.push(Some((g, e.value)));
        }
        out.resize(points.len(), None);
        out
    }

    fn eval(&mut self, g: Vec<f64>) -> Option<(Vec<f64>, f64)> {
        self.eval_batch(vec![g]).pop().flatten()
    }
}

fn diameter(space: &ControlSpace, pts: &[(Vec<f64>, f64)]) -> f64 {
    let mut d = 0.0f64;
    for a in pts {
        for b in pts {
            let diff: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect();
            d = d.max(space.norm(&diff));
        }
    }
    d
}

/// Nelder-Mead with adaptive coefficients; trial points are projected onto the ball.
fn nelder_mead(t: &mut Tracker, start: Vec<f64>, step: f64, xtol: f64) {
    let space = &t.problem.space;
    let n = space.dim();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut init = vec![start.clone()];
    for i in 0..n {
        let mut p = start.clone();
        // step measured in the L2 norm of the force
        p[i] += step / space.basis().l2_mass(i).sqrt();
        init.push(p);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = t.eval_batch(init).into_iter().flatten().collect();
    if simplex.len() < n + 1 {
        return;
    }
    let combine = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * (x - y)).collect()
    };
    while !t.done() {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(space, &simplex) <= xtol {
            return;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / nf)
            .collect();
        let worst = simplex[n].clone();
        let Some(refl) = t.eval(combine(&centroid, &worst.0, alpha)) else {
            return;
        };
        if refl.1 < simplex[0].1 {
            let Some(exp) = t.eval(combine(&centroid, &worst.0, alpha * gamma)) else {
                return;
            };
            simplex[n] = if exp.1 < refl.1 { exp } else { refl };
            continue;
        }
        if refl.1 < simplex[n - 1].1 {
            simplex[n] = refl;
            continue;
        }
        let contracted = if refl.1 < worst.1 {
            combine(&centroid, &worst.0, alpha * rho)
        } else {
            combine(&centroid, &worst.0, -rho)
        };
        let Some(con) = t.eval(contracted) else {
            return;
        };
        if con.1 < refl.1.min(worst.1) {
            simplex[n] = con;
            continue;
        }
        let best = simplex[0].0.clone();
        let shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|p| {
                best.iter()
                    .zip(&p.0)
                    .map(|(b, x)| b + sigma * (x - b))
                    .collect()
            })
            .collect();
        let evals = t.eval_batch(shrunk);
        if evals.iter().any(Option::is_none) {
            return;
        }
        for (slot, e) in simplex[1..].iter_mut().zip(evals) {
            *slot = e.unwrap();
        }
    }
}

/// Projected gradient descent with central differences and backtracking.
fn projected_gradient(t: &mut Tracker, start: Vec<f64>, step: f64, xtol: f64) {
    let space = t.problem.space.clone();
    let n = space.dim();
    let Some(mut cur) = t.eval(start) else { return };
    let mut lr = step;
    let h = 1e-6 * t.adm.radius.max(1.0);
    while !t.done() {
        let probes: Vec<Vec<f64>> = (0..2 * n)
            .map(|j| {
                let mut p = cur.0.clone();
                p[j / 2] += if j % 2 == 0 { h } else { -h } / space.basis().l2_mass(j / 2).sqrt();
                p
            })
            .collect();
        let evals = t.eval_batch(probes);
        if evals.iter().any(Option::is_none) {
            return;
        }
        // gradient with respect to the L2 coordinates g_i ||u_i||
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                (evals[2 * i].as_ref().unwrap().1 - evals[2 * i + 1].as_ref().unwrap().1)
                    / (2.0 * h)
            })
            .collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !gnorm.is_finite() || gnorm == 0.0 {
            return;
        }
        let mut improved = false;
        while lr > xtol && !t.done() {
            let trial: Vec<f64> = (0..n)
                .map(|i| cur.0[i] - lr * grad[i] / gnorm / space.basis().l2_mass(i).sqrt())
                .collect();
            let Some(next) = t.eval(trial) else { return };
            if next.1 < cur.1 {
                cur = next;
                lr *= 2.0;
                improved = true;
                break;
            }
            lr *= 0.5;
        }
        if !improved {
            return;
        }
    }
}

fn random_start(space: &ControlSpace, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = space.dim();
    // direction uniform on the sphere, radius with density ~ r^(m-1)
    let dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * rng.random_range(0.0f64..1.0).powf(1.0 / m as f64);
    dir.iter()
        .enumerate()
        .map(|(i, d)| r * d / len / space.basis().l2_mass(i).sqrt())
        .collect()
}

/// Minimises the objective over the admissible ball. Restarts the chosen method
/// from the incumbent until the budget or `restarts` is exhausted.
pub fn optimize(
    problem: &ControlProblem,
    objective: &Objective,
    adm: &AdmissibleSet,
    config: &OptimConfig,
) -> Result<OptimResult, ControlError> {
    let m = problem.space.dim();
    config.validate(m)?;
    if objective.target.len() != problem.space.basis().len() {
        return Err(ControlError::Invalid(format!(
            "target must have {} coefficients",
            problem.space.basis().len()
        )));
    }
    if !(objective.beta >= 0.0 && objective.beta.is_finite()) {
        return Err(ControlError::Invalid("beta must be non-negative".into()));
    }
    let mut tracker = Tracker {
        problem,
        objective,
        adm,
        budget: config.budget,
        target: config.target_value.unwrap_or(f64::NEG_INFINITY),
        history: Vec::new(),
        best: (vec![0.0; m], f64::INFINITY, None),
        failures: 0,
    };
    let start = match (&config.start, config.seed) {
        (Some(g), _) => g.clone(),
        (None, None) => vec![0.0; m],
        (None, Some(seed)) => random_start(&problem.space, 0.5 * adm.radius, seed),
    };
    let step0 = config.initial_step.unwrap_or(0.5) * adm.radius;
    let xtol = config.xtol * adm.radius;
    let mut restarts_used = 0;
    let mut from = start;
    let mut step = step0;
    loop {
        match config.method {
            OptimMethod::NelderMead => nelder_mead(&mut tracker, from, step, xtol),
            OptimMethod::ProjectedGradient => projected_gradient(&mut tracker, from, step, xtol),
        }
        if tracker.done() || restarts_used >= config.restarts {
            break;
        }
        restarts_used += 1;
        from = tracker.best.0.clone();
        step *= 0.1;
    }
    let result = OptimResult {
        g_hat: tracker.best.0,
        value: tracker.best.1,
        state: tracker.best.2,
        evaluations: tracker.history.len(),
        history: tracker.history,
        failures: tracker.failures,
        restarts_used,
    };
    if result.evaluations >= config.budget && !(result.value <= tracker.target) {
        return Err(ControlError::BudgetExhausted {
            budget: config.budget,
            best: Box::new(result),
        });
    }
    Ok(result)
}
