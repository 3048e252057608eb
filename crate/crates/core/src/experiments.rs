//! Dependence and convergence experiments: perturbed boundary laws, weakly
//! convergent forces, and grids over the regularisation width and mode cutoff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SolveSettings;
use crate::galerkin::{ForceSpec, StreamBasis};
use crate::quadrature::{QuadratureRule, QuadratureSpec};
use crate::solver::{
    continuation_solve, ContinuationRun, ContinuationSchedule, InclusionReport, SolveResult,
    SolverError,
};
use crate::superpotential::{JumpFunction, RauchViolation};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("law {index} violates the shared sign condition: {violation}")]
    Hypothesis {
        index: u32,
        violation: RauchViolation,
    },
    #[error("solve for index {index} failed: {source}")]
    Solve {
        index: u32,
        #[source]
        source: SolverError,
    },
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

impl ExperimentError {
    pub fn solver_error(&self) -> Option<&SolverError> {
        match self {
            ExperimentError::Solve { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn run(
    settings: &SolveSettings,
    theta: &JumpFunction,
    t0: f64,
    force: Option<&ForceSpec>,
    index: u32,
) -> Result<ContinuationRun, ExperimentError> {
    let wrap = |source| ExperimentError::Solve { index, source };
    let settings = force.map_or_else(|| settings.clone(), |f| settings.with_force(f.clone()));
    let family = settings.family(theta.clone(), t0).map_err(wrap)?;
    let schedule = settings
        .schedule()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    continuation_solve(&family, &schedule, &settings.newton(), None).map_err(wrap)
}

fn v_distance(basis: &StreamBasis, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    basis.v_norm(&diff)
}

/// Indexed laws `Theta^k` converging to `Theta^inf`, all certified with one `t0`.
#[derive(Debug, Clone)]
pub struct ThetaSequence {
    limit: JumpFunction,
    t0: f64,
    members: Vec<(u32, JumpFunction)>,
}

impl ThetaSequence {
    /// Refuses the sequence unless every member and the limit pass the sign
    /// condition with the same `t0`.
    pub fn new(
        limit: JumpFunction,
        t0: f64,
        members: Vec<(u32, JumpFunction)>,
    ) -> Result<Self, ExperimentError> {
        if members.is_empty() {
            return Err(ExperimentError::Invalid("empty law sequence".into()));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(ExperimentError::Invalid(format!(
                "t0 must be positive, got {t0}"
            )));
        }
        limit
            .check_rauch(t0)
            .map_err(|violation| ExperimentError::Hypothesis {
                index: 0,
                violation,
            })?;
        for (k, law) in &members {
            law.check_rauch(t0)
                .map_err(|violation| ExperimentError::Hypothesis {
                    index: *k,
                    violation,
                })?;
        }
        Ok(ThetaSequence { limit, t0, members })
    }

    /// `Theta^k = Theta^inf + perturbation / k`.
    pub fn perturbed(
        limit: JumpFunction,
        t0: f64,
        perturbation: &JumpFunction,
        indices: &[u32],
    ) -> Result<Self, ExperimentError> {
        if indices.contains(&0) {
            return Err(ExperimentError::Invalid("indices must be positive".into()));
        }
        let members = indices
            .iter()
            .map(|&k| (k, limit.add(&perturbation.scaled(1.0 / k as f64))))
            .collect();
        Self::new(limit, t0, members)
    }

    pub fn limit(&self) -> &JumpFunction {
        &self.limit
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn members(&self) -> &[(u32, JumpFunction)] {
        &self.members
    }

    /// Samples `limsup Graph(Theta^k) in Graph(Theta^inf)`: at each grid point the
    /// filled interval of `Theta^k` must lie within `delta_k` (in both `t` and value)
    /// of the filled graph of the limit, i.e. inside the limit's envelopes over
    /// `[t - delta_k, t + delta_k]` widened by `delta_k`.
    pub fn graph_inclusion<D: Fn(u32) -> f64>(
        &self,
        grid: &[f64],
        delta: D,
    ) -> GraphInclusionReport {
        let rows = self
            .members
            .iter()
            .map(|(k, law)| {
                let d = delta(*k);
                let excess = grid
                    .iter()
                    .map(|&t| {
                        let filled = law.filled_interval(t);
                        let target = self.limit.envelopes(d, t).widened(d);
                        (target.lower - filled.lower).max(filled.upper - target.upper)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                GraphInclusionRow {
                    k: *k,
                    delta: d,
                    max_excess: excess,
                    passed: excess <= 0.0,
                }
            })
            .collect::<Vec<_>>();
        GraphInclusionReport {
            grid_points: grid.len(),
            passed: rows.iter().all(|r| r.passed),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInclusionRow {
    pub k: u32,
    pub delta: f64,
    /// Largest overshoot of the filled interval beyond the widened target; `<= 0` passes.
    pub max_excess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInclusionReport {
    pub grid_points: usize,
    pub rows: Vec<GraphInclusionRow>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDependenceRow {
    pub k: u32,
    pub distance_v: f64,
    pub residual_norm: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDependence {
    pub limit: SolveResult,
    pub rows: Vec<ThetaDependenceRow>,
}

impl ThetaDependence {
    /// Last distance over first.
    pub fn trend_ratio(&self) -> f64 {
        trend(self.rows.iter().map(|r| r.distance_v))
    }
}

fn trend(mut it: impl DoubleEndedIterator<Item = f64> + Clone) -> f64 {
    let first = it.clone().next().unwrap_or(0.0);
    let last = it.next_back().unwrap_or(0.0);
    if first == 0.0 {
        if last == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        last / first
    }
}

/// Solves for every `Theta^k` and for the limit; reports `||c^k - c^inf||_V`.
pub fn run_theta_dependence(
    seq: &ThetaSequence,
    settings: &SolveSettings,
) -> Result<ThetaDependence, ExperimentError> {
    let limit = run(settings, &seq.limit, seq.t0, None, 0)?;
    let basis = StreamBasis::build(settings.n_max_energy)
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let c_inf = limit.final_result().coeffs.clone();
    let rows = seq
        .members
        .par_iter()
        .map(|(k, law)| {
            let r = run(settings, law, seq.t0, None, *k)?;
            let res = r.final_result();
            Ok(ThetaDependenceRow {
                k: *k,
                distance_v: v_distance(&basis, &res.coeffs, &c_inf),
                residual_norm: res.residual_norm,
                newton_iters: res.newton_iters,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(ThetaDependence {
        limit: limit.final_result().clone(),
        rows,
    })
}

/// `f_n = f + A * phi_n` with `phi_n` the unit-L2 stream mode `(n, l)`: a
/// fixed-amplitude oscillation that tends to zero weakly as `n` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSequence {
    pub base: ForceSpec,
    pub amplitude: f64,
    pub indices: Vec<u32>,
    /// Second wavenumber of the oscillating mode.
    #[serde(default)]
    pub l: u32,
}

impl ForceSequence {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !self.amplitude.is_finite() {
            return Err(ExperimentError::Invalid("amplitude must be finite".into()));
        }
        if self.indices.is_empty() || self.indices.iter().any(|&n| n == 0 && self.l == 0) {
            return Err(ExperimentError::Invalid(
                "indices must be non-empty and name nonzero modes".into(),
            ));
        }
        self.base
            .validate()
            .map_err(|e| ExperimentError::Invalid(e.to_string()))
    }

    pub fn member(&self, n: u32) -> ForceSpec {
        ForceSpec::Sum {
            terms: vec![
                self.base.clone(),
                ForceSpec::Mode {
                    k: n,
                    l: self.l,
                    amplitude: self.amplitude,
                    normalized: true,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceDependenceRow {
    pub n: u32,
    /// Whether the oscillating mode belongs to the solver basis.
    pub in_band: bool,
    pub distance_v: f64,
    /// `max_i |<f_n - f, psi_i>|`.
    pub load_gap_max: f64,
    /// `||F_n - F||_*`.
    pub load_gap_dual: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceDependence {
    pub base: SolveResult,
    pub rows: Vec<ForceDependenceRow>,
    /// `|<f_n - f, psi_i>|` for every basis mode, one vector per row.
    pub load_gaps: Vec<Vec<f64>>,
}

impl ForceDependence {
    /// Last over first distance among in-band rows.
    pub fn in_band_ratio(&self) -> f64 {
        let d: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.in_band)
            .map(|r| r.distance_v)
            .collect();
        trend(d.into_iter())
    }

    /// Each fixed mode's load gap is nonzero at no more than one index, so it
    /// vanishes along the sequence.
    pub fn weak_convergence_witness(&self) -> bool {
        let modes = self.load_gaps.first().map_or(0, Vec::len);
        (0..modes).all(|i| self.load_gaps.iter().filter(|g| g[i] != 0.0).count() <= 1)
    }
}

pub fn run_force_dependence(
    seq: &ForceSequence,
    theta: &JumpFunction,
    t0: f64,
    settings: &SolveSettings,
) -> Result<ForceDependence, ExperimentError> {
    seq.validate()?;
    let basis = StreamBasis::build(settings.n_max_energy)
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let quad = QuadratureRule::new(QuadratureSpec::for_max_frequency(basis.max_frequency()));
    let base_run = run(settings, theta, t0, Some(&seq.base), 0)?;
    let c0 = base_run.final_result().coeffs.clone();
    let f0 = seq.base.load(&basis, &quad);
    let rows: Vec<(ForceDependenceRow, Vec<f64>)> = seq
        .indices
        .par_iter()
        .map(|&n| {
            let force = seq.member(n);
            let gaps: Vec<f64> = force
                .load(&basis, &quad)
                .iter()
                .zip(&f0)
                .map(|(a, b)| a - b)
                .collect();
            let r = run(settings, theta, t0, Some(&force), n)?;
            let res = r.final_result();
            let row = ForceDependenceRow {
                n,
                in_band: basis.index_of((n, seq.l)).is_some(),
                distance_v: v_distance(&basis, &res.coeffs, &c0),
                load_gap_max: gaps.iter().fold(0.0, |m, g| m.max(g.abs())),
                load_gap_dual: basis.dual_norm(&gaps),
                residual_norm: res.residual_norm,
            };
            Ok((row, gaps.into_iter().map(f64::abs).collect()))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let (rows, load_gaps) = rows.into_iter().unzip();
    Ok(ForceDependence {
        base: base_run.final_result().clone(),
        rows,
        load_gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n_max_energy: u32,
    pub modes: usize,
    pub residual_norm: f64,
    pub newton_iters: usize,
    /// Difference to the previous `eps` at this cutoff.
    pub cauchy_eps: Option<f64>,
    /// Difference to the previous cutoff at this `eps`, injected into this basis.
    pub cauchy_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Inclusion check at the smallest `eps` and largest cutoff.
    pub finest_inclusion: Option<InclusionReport>,
}

/// Continuation over `epsilons` for each cutoff in `cutoffs` (ascending).
pub fn run_epsilon_mode_sweep(
    settings: &SolveSettings,
    theta: &JumpFunction,
    t0: f64,
    cutoffs: &[u32],
) -> Result<Sweep, ExperimentError> {
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Invalid(
            "cutoffs must be non-empty and strictly increasing".into(),
        ));
    }
    let family = settings
        .family(theta.clone(), t0)
        .map_err(|source| ExperimentError::Solve { index: 0, source })?;
    let runs = cutoffs
        .par_iter()
        .map(|&n| {
            let sched = ContinuationSchedule::fixed_modes(&settings.epsilon_schedule, n)
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            continuation_solve(
                &family,
                &sched,
                &settings.newton(),
                Some(settings.inclusion),
            )
            .map_err(|source| ExperimentError::Solve { index: n, source })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let bases: Vec<StreamBasis> = cutoffs
        .iter()
        .map(|&n| StreamBasis::build(n).expect("cutoff already solved"))
        .collect();
    let mut rows = Vec::new();
    for (j, run) in runs.iter().enumerate() {
        for (i, step) in run.steps.iter().enumerate() {
            let cauchy_n = (j > 0).then(|| {
                let prev = &runs[j - 1].steps[i].result.coeffs;
                let injected = bases[j].inject(prev, &bases[j - 1]);
                v_distance(&bases[j], &step.result.coeffs, &injected)
            });
            rows.push(SweepRow {
                epsilon: step.epsilon,
                n_max_energy: step.n_max_energy,
                modes: bases[j].len(),
                residual_norm: step.result.residual_norm,
                newton_iters: step.result.newton_iters,
                cauchy_eps: step.cauchy_diff,
                cauchy_n,
            });
        }
    }
    Ok(Sweep {
        rows,
        finest_inclusion: runs.last().and_then(|r| r.inclusion.clone()),
    })
}
