use std::path::Path;

use nshvi::config::read_json;
use nshvi::control::{
    optimize, AdmissibleSet, ControlError, ControlProblem, ControlSpace, Objective, OptimResult,
};
use nshvi::experiments::{
    run_epsilon_mode_sweep, run_force_dependence, run_theta_dependence, ExperimentError,
    ForceSequence, ThetaSequence,
};
use nshvi::report::{OutputBuilder, ReportError, RunManifest};
use nshvi::solver::{
    continuation_solve, solve_multistart, InclusionReport, SolveResult, SolverError, StepRecord,
};
use nshvi::superpotential::{JumpFunction, RauchCertificate, RauchViolation};
use serde::Serialize;
use serde_json::{json, Value};

use crate::configs::{
    check_settings, load, resolve_law, CheckConfig, ControlConfig, DependConfig, Experiment,
    SolveConfig, SweepConfig, Target,
};
use crate::{CliError, Outcome};

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn report_err(e: ReportError) -> CliError {
    CliError::Io(e.to_string())
}

/// Sorts a solver failure into the exit-code taxonomy. `Ok` means the run
/// stopped on non-convergence and partial results should be written.
fn classify(e: &SolverError) -> Result<(), CliError> {
    match e {
        SolverError::NonConvergence { .. } | SolverError::SingularJacobian { .. } => Ok(()),
        SolverError::StepFailed { source, .. } => classify(source),
        SolverError::Rauch(v) => Err(CliError::Hypothesis(v.to_string())),
        other => Err(config_err(other)),
    }
}

fn classify_experiment(e: &ExperimentError) -> Result<(), CliError> {
    match e {
        ExperimentError::Solve { source, .. } => classify(source),
        ExperimentError::Hypothesis { .. } => Err(CliError::Hypothesis(e.to_string())),
        ExperimentError::Invalid(_) => Err(config_err(e)),
    }
}

fn write(builder: OutputBuilder, manifest: RunManifest, out: &Path) -> Result<(), CliError> {
    let set = builder.finish(manifest).map_err(report_err)?;
    let written = set.write_to(out).map_err(report_err)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn effective<C: Serialize>(cfg: &C, theta: &JumpFunction) -> Value {
    json!({ "input": cfg, "law": theta.to_definition() })
}

/// Inclusion report without the per-node table, which goes to its own CSV.
fn inclusion_summary(report: &InclusionReport) -> Value {
    let mut v = serde_json::to_value(report).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.remove("nodes");
    }
    v
}

#[derive(Serialize)]
struct LimitRow {
    t: f64,
    left: f64,
    right: f64,
}

#[derive(Serialize)]
struct EnvelopeRow {
    t: f64,
    lower: f64,
    upper: f64,
    filled_lower: f64,
    filled_upper: f64,
}

#[derive(Serialize)]
struct CheckReport {
    breakpoints: Vec<LimitRow>,
    certificate: Option<RauchCertificate>,
    violation: Option<RauchViolation>,
    mu: f64,
    envelope: Vec<EnvelopeRow>,
}

pub fn check_theta(config: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mut cfg, dir): (CheckConfig, _) = load(config)?;
    let theta = cfg.theta.resolve(&dir).map_err(config_err)?;
    let env = &cfg.envelope;
    if !(env.mu > 0.0 && env.mu.is_finite()) || env.points < 2 {
        return Err(config_err("envelope needs mu > 0 and at least 2 points"));
    }
    if let Some(t0) = cfg.t0 {
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(config_err(format!("t0 must be positive, got {t0}")));
        }
    }
    let rauch = match cfg.t0 {
        Some(t0) => theta.check_rauch(t0),
        None => theta.find_rauch_threshold().ok_or_else(|| {
            theta
                .check_rauch(1.0)
                .expect_err("no threshold found, so t0 = 1 fails")
        }),
    };
    let scale = theta
        .breakpoints()
        .iter()
        .map(|b| b.abs())
        .chain([1.0, cfg.t0.unwrap_or(1.0)])
        .fold(0.0, f64::max);
    let half = env.half_range.unwrap_or(2.0 * scale);
    if !(half > 0.0 && half.is_finite()) {
        return Err(config_err("envelope half_range must be positive"));
    }
    cfg.envelope.half_range = Some(half);
    let mu = cfg.envelope.mu;
    let n = cfg.envelope.points;

    let report = CheckReport {
        breakpoints: theta
            .breakpoints()
            .iter()
            .map(|&t| {
                let (left, right) = theta.one_sided_limits(t);
                LimitRow { t, left, right }
            })
            .collect(),
        certificate: rauch.as_ref().ok().copied(),
        violation: rauch.as_ref().err().cloned(),
        mu,
        envelope: (0..n)
            .map(|i| {
                let t = -half + 2.0 * half * i as f64 / (n - 1) as f64;
                let e = theta.envelopes(mu, t);
                let f = theta.filled_interval(t);
                EnvelopeRow {
                    t,
                    lower: e.lower,
                    upper: e.upper,
                    filled_lower: f.lower,
                    filled_upper: f.upper,
                }
            })
            .collect(),
    };

    for r in &report.breakpoints {
        println!(
            "breakpoint {}: left limit {}, right limit {}",
            r.t, r.left, r.right
        );
    }
    match &rauch {
        Ok(c) => println!("certificate: t0 = {}, a = {}, b = {}", c.t0, c.a, c.b),
        Err(v) => println!(
            "violation: {v}; witness t = {}, Theta = {}",
            v.witness, v.value
        ),
    }
    println!("envelopes (mu = {mu}):");
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12}",
        "t", "lower", "upper", "filled_lo", "filled_hi"
    );
    for r in &report.envelope {
        println!(
            "{:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.t, r.lower, r.upper, r.filled_lower, r.filled_upper
        );
    }

    if let Some(out) = out {
        let manifest = RunManifest::new("check-theta", &effective(&cfg, &theta), None);
        let mut b = OutputBuilder::new();
        b.json("check.json", &report).map_err(report_err)?;
        b.csv("envelope.csv", &report.envelope)
            .map_err(report_err)?;
        write(b, manifest, out)?;
    }
    match rauch {
        Ok(_) => Ok(Outcome { converged: true }),
        Err(v) => Err(CliError::Hypothesis(v.to_string())),
    }
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    epsilon: f64,
    n_max_energy: u32,
    modes: usize,
    converged: bool,
    residual_norm: f64,
    newton_iters: usize,
    cauchy_diff: Option<f64>,
    cold_restart: bool,
    apriori_ok: Option<bool>,
    boundary_margin: Option<f64>,
    norm_margin: Option<f64>,
    energy_relative_error: Option<f64>,
    integrability_ok: Option<bool>,
}

impl StepRow {
    fn new(step: usize, n_max_energy: u32, r: &SolveResult) -> Self {
        StepRow {
            step,
            epsilon: r.epsilon,
            n_max_energy,
            modes: r.modes.len(),
            converged: r.converged(),
            residual_norm: r.residual_norm,
            newton_iters: r.newton_iters,
            cauchy_diff: None,
            cold_restart: false,
            apriori_ok: r.apriori.as_ref().map(|a| a.ok),
            boundary_margin: r.apriori.as_ref().map(|a| a.boundary_margin),
            norm_margin: r.apriori.as_ref().map(|a| a.norm_margin),
            energy_relative_error: r.energy.as_ref().map(|e| e.relative_error),
            integrability_ok: None,
        }
    }

    fn from_record(step: usize, rec: &StepRecord) -> Self {
        StepRow {
            cauchy_diff: rec.cauchy_diff,
            cold_restart: rec.cold_restart,
            integrability_ok: Some(rec.integrability.ok),
            ..StepRow::new(step, rec.n_max_energy, &rec.result)
        }
    }
}

#[derive(Serialize)]
struct BoundaryRow {
    arc: f64,
    weight: f64,
    u_n: f64,
    xi: f64,
    lower: f64,
    upper: f64,
    margin: f64,
    jump_adjacent: bool,
}

#[derive(Serialize)]
struct BranchRow {
    branch: usize,
    residual_norm: f64,
    newton_iters: usize,
    v_norm: f64,
    v_distance_to_continuation: f64,
}

pub fn solve(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let (mut cfg, dir): (SolveConfig, _) = load(config)?;
    if let Some(s) = seed {
        if !cfg.solve.seeds.contains(&s) {
            cfg.solve.seeds.push(s);
        }
    }
    check_settings(&cfg.solve)?;
    let (theta, cert) = resolve_law(&cfg.theta, cfg.t0, &dir)?;
    cfg.t0 = Some(cert.t0);
    let family = cfg
        .solve
        .family(theta.clone(), cert.t0)
        .map_err(config_err)?;
    let schedule = cfg.solve.schedule().map_err(config_err)?;
    let opts = cfg.solve.newton();
    let manifest = RunManifest::new("solve", &effective(&cfg, &theta), seed);
    let mut b = OutputBuilder::new();

    match continuation_solve(&family, &schedule, &opts, Some(cfg.solve.inclusion)) {
        Ok(run) => {
            let rows: Vec<StepRow> = run
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| StepRow::from_record(i, s))
                .collect();
            let last = run.final_result();
            let mut branches = Vec::new();
            if !cfg.solve.seeds.is_empty() {
                let &(eps, n) = schedule.steps().last().expect("validated schedule");
                let problem = family.problem(eps, n).map_err(config_err)?;
                let basis = problem.system().basis();
                for (i, r) in solve_multistart(&problem, &cfg.solve.seeds, &opts)
                    .iter()
                    .enumerate()
                {
                    let diff: Vec<f64> = r
                        .coeffs
                        .iter()
                        .zip(&last.coeffs)
                        .map(|(a, b)| a - b)
                        .collect();
                    branches.push(BranchRow {
                        branch: i,
                        residual_norm: r.residual_norm,
                        newton_iters: r.newton_iters,
                        v_norm: basis.v_norm(&r.coeffs),
                        v_distance_to_continuation: basis.v_norm(&diff),
                    });
                }
            }
            let record = json!({
                "status": "converged",
                "certificate": cert,
                "final": last,
                "inclusion": run.inclusion.as_ref().map(inclusion_summary),
                "branches": branches.len(),
            });
            b.json("result.json", &record).map_err(report_err)?;
            b.csv("steps.csv", &rows).map_err(report_err)?;
            if let Some(inc) = &run.inclusion {
                let rows: Vec<BoundaryRow> = inc
                    .nodes
                    .iter()
                    .zip(&last.xi_samples)
                    .map(|(nd, &xi)| BoundaryRow {
                        arc: nd.arc,
                        weight: nd.weight,
                        u_n: nd.u_n,
                        xi,
                        lower: nd.lower,
                        upper: nd.upper,
                        margin: nd.margin,
                        jump_adjacent: nd.jump_adjacent,
                    })
                    .collect();
                b.csv("boundary.csv", &rows).map_err(report_err)?;
            }
            if !branches.is_empty() {
                b.csv("branches.csv", &branches).map_err(report_err)?;
            }
            write(b, manifest, out)?;
            Ok(Outcome { converged: true })
        }
        Err(e) => {
            classify(&e)?;
            let mut rows: Vec<StepRow> = match &e {
                SolverError::StepFailed { completed, .. } => completed
                    .iter()
                    .enumerate()
                    .map(|(i, s)| StepRow::from_record(i, s))
                    .collect(),
                _ => vec![],
            };
            let failed_step = rows.len();
            if let Some(best) = e.best_result() {
                let n = schedule.steps()[failed_step.min(schedule.len() - 1)].1;
                rows.push(StepRow::new(failed_step, n, best));
            }
            let record = json!({
                "status": "non_converged",
                "error": e.to_string(),
                "certificate": cert,
                "failed_step": failed_step,
                "best_iterate": e.best_result(),
            });
            b.json("result.json", &record).map_err(report_err)?;
            b.csv("steps.csv", &rows).map_err(report_err)?;
            write(b, manifest, out)?;
            Ok(Outcome { converged: false })
        }
    }
}

/// Writes a record describing a failed experiment; only reached for non-convergence.
fn write_failure(
    name: &str,
    e: &ExperimentError,
    manifest: RunManifest,
    out: &Path,
) -> Result<Outcome, CliError> {
    classify_experiment(e)?;
    let index = match e {
        ExperimentError::Solve { index, .. } => Some(*index),
        _ => None,
    };
    let record = json!({
        "status": "non_converged",
        "error": e.to_string(),
        "index": index,
        "best_iterate": e.solver_error().and_then(SolverError::best_result),
    });
    let mut b = OutputBuilder::new();
    b.json(name, &record).map_err(report_err)?;
    write(b, manifest, out)?;
    Ok(Outcome { converged: false })
}

pub fn sweep(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let (mut cfg, dir): (SweepConfig, _) = load(config)?;
    check_settings(&cfg.solve)?;
    let cutoffs = cfg
        .cutoffs
        .get_or_insert_with(|| vec![cfg.solve.n_max_energy])
        .clone();
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[1] <= w[0]) || cutoffs[0] == 0 {
        return Err(config_err(
            "cutoffs must be positive and strictly increasing",
        ));
    }
    let (theta, cert) = resolve_law(&cfg.theta, cfg.t0, &dir)?;
    cfg.t0 = Some(cert.t0);
    let manifest = RunManifest::new("sweep", &effective(&cfg, &theta), seed);
    match run_epsilon_mode_sweep(&cfg.solve, &theta, cert.t0, &cutoffs) {
        Ok(sweep) => {
            let record = json!({
                "status": "converged",
                "certificate": cert,
                "rows": sweep.rows,
                "finest_inclusion": sweep.finest_inclusion.as_ref().map(inclusion_summary),
            });
            let mut b = OutputBuilder::new();
            b.csv("sweep.csv", &sweep.rows).map_err(report_err)?;
            b.json("sweep.json", &record).map_err(report_err)?;
            write(b, manifest, out)?;
            Ok(Outcome { converged: true })
        }
        Err(e) => write_failure("sweep.json", &e, manifest, out),
    }
}

#[derive(Serialize)]
struct GraphRow {
    k: u32,
    delta: f64,
    max_excess: f64,
    passed: bool,
}

pub fn depend(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let (mut cfg, dir): (DependConfig, _) = load(config)?;
    check_settings(&cfg.solve)?;
    let (theta, cert) = resolve_law(&cfg.theta, cfg.t0, &dir)?;
    cfg.t0 = Some(cert.t0);
    let t0 = cert.t0;
    let mut b = OutputBuilder::new();
    match &mut cfg.experiment {
        Experiment::Theta {
            perturbation,
            indices,
            graph,
        } => {
            let pert = perturbation.resolve(&dir).map_err(config_err)?;
            let half = *graph.half_range.get_or_insert(4.0 * t0.max(1.0));
            if graph.points < 2
                || !(half > 0.0 && half.is_finite())
                || !(graph.delta_scale > 0.0 && graph.delta_scale.is_finite())
            {
                return Err(config_err(
                    "graph check needs at least 2 points and positive half_range and delta_scale",
                ));
            }
            let seq = ThetaSequence::perturbed(theta.clone(), t0, &pert, indices).map_err(|e| {
                match classify_experiment(&e) {
                    Err(c) => c,
                    Ok(()) => config_err(e),
                }
            })?;
            let n = graph.points;
            let grid: Vec<f64> = (0..n)
                .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
                .collect();
            let scale = graph.delta_scale;
            let inclusion = seq.graph_inclusion(&grid, |k| scale / k as f64);
            let manifest = RunManifest::new("depend", &effective(&cfg, &theta), seed);
            match run_theta_dependence(&seq, &cfg.solve) {
                Ok(dep) => {
                    let graph_rows: Vec<GraphRow> = inclusion
                        .rows
                        .iter()
                        .map(|r| GraphRow {
                            k: r.k,
                            delta: r.delta,
                            max_excess: r.max_excess,
                            passed: r.passed,
                        })
                        .collect();
                    let record = json!({
                        "status": "converged",
                        "kind": "theta",
                        "trend_ratio": dep.trend_ratio(),
                        "graph_inclusion": inclusion,
                        "rows": dep.rows,
                        "limit": dep.limit,
                    });
                    b.csv("depend.csv", &dep.rows).map_err(report_err)?;
                    b.csv("graph.csv", &graph_rows).map_err(report_err)?;
                    b.json("depend.json", &record).map_err(report_err)?;
                    write(b, manifest, out)?;
                    Ok(Outcome { converged: true })
                }
                Err(e) => write_failure("depend.json", &e, manifest, out),
            }
        }
        Experiment::Force {
            amplitude,
            indices,
            l,
        } => {
            let seq = ForceSequence {
                base: cfg.solve.force.clone(),
                amplitude: *amplitude,
                indices: indices.clone(),
                l: *l,
            };
            seq.validate().map_err(config_err)?;
            let manifest = RunManifest::new("depend", &effective(&cfg, &theta), seed);
            match run_force_dependence(&seq, &theta, t0, &cfg.solve) {
                Ok(dep) => {
                    let record = json!({
                        "status": "converged",
                        "kind": "force",
                        "in_band_ratio": dep.in_band_ratio(),
                        "weak_convergence_witness": dep.weak_convergence_witness(),
                        "rows": dep.rows,
                        "load_gaps": dep.load_gaps,
                        "base": dep.base,
                    });
                    b.csv("depend.csv", &dep.rows).map_err(report_err)?;
                    b.json("depend.json", &record).map_err(report_err)?;
                    write(b, manifest, out)?;
                    Ok(Outcome { converged: true })
                }
                Err(e) => write_failure("depend.json", &e, manifest, out),
            }
        }
    }
}

fn control_err(e: ControlError) -> CliError {
    match e {
        ControlError::Solve { source, .. } => match classify(&source) {
            Err(c) => c,
            Ok(()) => config_err(format!("solver failed: {source}")),
        },
        other => config_err(other),
    }
}

pub fn control(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let (mut cfg, dir): (ControlConfig, _) = load(config)?;
    check_settings(&cfg.solve)?;
    if seed.is_some() {
        cfg.optimizer.seed = seed;
    }
    let (theta, cert) = resolve_law(&cfg.theta, cfg.t0, &dir)?;
    cfg.t0 = Some(cert.t0);
    let m = cfg.control.m;
    let space = ControlSpace::new(cfg.solve.n_max_energy, m).map_err(config_err)?;
    cfg.optimizer.validate(m).map_err(config_err)?;
    if !(cfg.control.beta >= 0.0 && cfg.control.beta.is_finite()) {
        return Err(config_err("beta must be non-negative"));
    }
    let g_star = match &cfg.control.target {
        Target::InverseCrime { g_star }
            if g_star.len() != m || g_star.iter().any(|x| !x.is_finite()) =>
        {
            return Err(config_err(format!("g_star must have {m} finite entries")));
        }
        Target::InverseCrime { g_star } => Some(g_star.clone()),
        _ => None,
    };
    let radius = match (cfg.control.radius, cfg.control.radius_factor, &g_star) {
        (Some(r), None, _) => r,
        (None, Some(f), Some(g)) if f > 0.0 && f.is_finite() => f * space.norm(g),
        (None, Some(_), None) => {
            return Err(config_err("radius_factor needs an inverse_crime target"))
        }
        _ => {
            return Err(config_err(
                "give exactly one of radius and a positive radius_factor",
            ))
        }
    };
    let adm = AdmissibleSet::new(radius).map_err(config_err)?;
    let problem = ControlProblem::new(space, cfg.solve.clone(), theta.clone(), cert.t0)
        .map_err(control_err)?;
    let n_coeffs = problem.space.basis().len();
    let explicit_target = match &cfg.control.target {
        Target::InverseCrime { .. } => None,
        Target::Coefficients { values } => Some(values.clone()),
        Target::File { path } => Some(read_json::<Vec<f64>>(&dir.join(path)).map_err(config_err)?),
    };
    if let Some(t) = &explicit_target {
        if t.len() != n_coeffs || t.iter().any(|x| !x.is_finite()) {
            return Err(config_err(format!(
                "target must have {n_coeffs} finite coefficients"
            )));
        }
    }
    let manifest = RunManifest::new(
        "control",
        &json!({ "input": cfg, "law": theta.to_definition(), "radius": radius }),
        cfg.optimizer.seed,
    );

    let target = match (explicit_target, &g_star) {
        (Some(t), _) => t,
        (None, Some(g)) => match problem.solution_map(g) {
            Ok(run) => run.final_result().coeffs.clone(),
            Err(ControlError::Solve { source, .. }) => {
                classify(&source)?;
                let record = json!({
                    "status": "non_converged",
                    "error": format!("target solve failed: {source}"),
                    "best_iterate": source.best_result(),
                });
                let mut b = OutputBuilder::new();
                b.json("control.json", &record).map_err(report_err)?;
                write(b, manifest, out)?;
                return Ok(Outcome { converged: false });
            }
            Err(e) => return Err(config_err(e)),
        },
        (None, None) => unreachable!("every target kind yields coefficients"),
    };
    let objective = Objective {
        target,
        beta: cfg.control.beta,
    };
    let reference_value = g_star
        .as_ref()
        .map(|g| problem.objective_eval(&objective, g).value);

    let (result, status): (OptimResult, &str) =
        match optimize(&problem, &objective, &adm, &cfg.optimizer) {
            Ok(r) => (r, "completed"),
            Err(ControlError::BudgetExhausted { best, .. }) => (*best, "budget_exhausted"),
            Err(e) => return Err(control_err(e)),
        };
    let converged = result.state.is_some();
    let record = json!({
        "status": if converged { status } else { "non_converged" },
        "g_hat": result.g_hat,
        "value": result.value,
        "g_star": g_star,
        "reference_value": reference_value,
        "radius": radius,
        "evaluations": result.evaluations,
        "failures": result.failures,
        "restarts_used": result.restarts_used,
        "state": result.state,
    });
    let mut b = OutputBuilder::new();
    b.csv("history.csv", &result.history).map_err(report_err)?;
    b.json("control.json", &record).map_err(report_err)?;
    write(b, manifest, out)?;
    Ok(Outcome { converged })
}
