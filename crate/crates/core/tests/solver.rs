mod common;

use common::{bisection_roots, theta_eps, OracleProblem};
use nshvi::galerkin::{assemble, ForceSpec, StreamBasis};
use nshvi::quadrature::{QuadratureRule, QuadratureSpec};
use nshvi::solver::*;
use nshvi::superpotential::JumpFunction;

fn problem(
    modes: Vec<(u32, u32)>,
    nu: f64,
    theta: &JumpFunction,
    eps: f64,
    force: &ForceSpec,
    t0: f64,
) -> RegularizedProblem {
    let basis = StreamBasis::from_modes(modes).unwrap();
    let quad = QuadratureRule::new(QuadratureSpec::for_max_frequency(basis.max_frequency()));
    let load = force.load(&basis, &quad);
    let sys = assemble(&basis, nu, &quad)
        .unwrap()
        .with_load(load)
        .unwrap();
    RegularizedProblem::new(sys, theta.clone(), eps, t0).unwrap()
}

fn mode(k: u32, l: u32, amplitude: f64) -> ForceSpec {
    ForceSpec::Mode {
        k,
        l,
        amplitude,
        normalized: false,
    }
}

fn orifice() -> JumpFunction {
    JumpFunction::orifice(2.0, 0.0, 1.0).unwrap()
}

#[test]
fn mollified_law_agrees_with_simpson_oracle() {
    let theta = orifice();
    let m = nshvi::superpotential::Mollifier::new(0.05).unwrap();
    for t in [-0.03, 0.0, 0.02, 0.5, 0.97, 1.0, 1.01, 1.2] {
        let (lib, oracle) = (m.mollify(&theta, t), theta_eps(&theta, 0.05, t, 400));
        assert!((lib - oracle).abs() < 1e-11, "t = {t}: {lib} vs {oracle}");
    }
}

#[test]
fn scalar_residual_matches_direct_oracle() {
    let theta = orifice();
    let p = problem(vec![(1, 0)], 1.0, &theta, 0.05, &mode(1, 0, 6.0), 1.5);
    let oracle = OracleProblem::new(p.system(), &theta, 0.05);
    for c in [0.1, 0.45] {
        let (lib, orc) = (p.residual(&[c])[0], oracle.residual(&[c])[0]);
        assert!(
            (lib - orc).abs() < 1e-10 * orc.abs().max(1.0),
            "c = {c}: {lib} vs {orc}"
        );
    }
}

#[test]
fn single_mode_orifice_matches_bisection() {
    let theta = orifice();
    let p = problem(vec![(1, 0)], 1.0, &theta, 0.05, &mode(1, 0, 6.0), 1.5);
    let res = solve_newton(&p, &[0.0], &NewtonOptions::new(1e-12, 100)).unwrap();
    let bound = res.apriori.unwrap().v_norm_bound / p.system().basis().norm_weight(0).sqrt();
    let oracle = OracleProblem::new(p.system(), &theta, 0.05);
    let roots = bisection_roots(|c| oracle.residual(&[c])[0], -bound, bound, 4000);
    assert!(!roots.is_empty());
    let nearest = roots
        .iter()
        .map(|r| (r - res.coeffs[0]).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(nearest < 1e-8, "{:?} vs {roots:?}", res.coeffs);
    // u_N reaches past the jump at b = 1
    assert!(res.u_n_samples.iter().any(|&u| u > 1.0));
}

#[test]
fn apriori_bounds_hold_for_sign_and_orifice() {
    let sign = JumpFunction::sign();
    let p = problem(
        vec![(1, 0), (0, 1), (1, 1)],
        1.0,
        &sign,
        0.1,
        &mode(1, 0, 8.0),
        1.0,
    );
    let res = solve_newton(&p, &[0.0; 3], &NewtonOptions::default()).unwrap();
    let rep = res.apriori.unwrap();
    assert_eq!(rep.boundary_lower_bound, -2.0 * 1.0 * 4.0);
    assert!(rep.ok && rep.boundary_margin >= 0.0);

    let p = problem(
        StreamBasis::build(8).unwrap().modes().to_vec(),
        1.0,
        &orifice(),
        0.05,
        &mode(1, 0, 6.0),
        1.5,
    );
    let res = solve_newton(&p, &vec![0.0; p.len()], &NewtonOptions::default()).unwrap();
    let rep = res.apriori.unwrap();
    assert!(
        rep.boundary_margin > 0.0 && rep.norm_margin > 0.0,
        "{rep:?}"
    );

    let p = problem(
        vec![(1, 0)],
        1.0,
        &JumpFunction::zero(),
        0.1,
        &ForceSpec::Zero,
        1.0,
    );
    let res = solve_newton(&p, &[0.0], &NewtonOptions::default()).unwrap();
    let rep = res.apriori.unwrap();
    assert_eq!(rep.boundary_integral, 0.0);
    assert!(rep.ok);
}

#[test]
fn energy_identity_on_converged_solves() {
    let force = ForceSpec::Sum {
        terms: vec![mode(1, 0, 6.0), mode(1, 1, 2.0), mode(0, 2, -1.0)],
    };
    for theta in [orifice(), JumpFunction::sign()] {
        let p = problem(
            StreamBasis::build(10).unwrap().modes().to_vec(),
            1.0,
            &theta,
            0.05,
            &force,
            1.5,
        );
        let res = solve_newton(&p, &vec![0.0; p.len()], &NewtonOptions::default()).unwrap();
        assert!(res.energy.unwrap().relative_error < 1e-8);
    }
}

#[test]
fn integrability_windows() {
    let p = problem(
        vec![(1, 0), (1, 1)],
        1.0,
        &JumpFunction::zero(),
        0.1,
        &mode(1, 0, 3.0),
        1.0,
    );
    let res = solve_newton(&p, &[0.0; 2], &NewtonOptions::default()).unwrap();
    let rep = uniform_integrability_check(&res, &p);
    assert!(rep.windows.iter().all(|w| w.max_sum == 0.0));

    // |sign| <= 1: every window sum is at most its measure
    let p = problem(
        vec![(1, 0), (1, 1)],
        1.0,
        &JumpFunction::sign(),
        0.1,
        &mode(1, 0, 6.0),
        1.0,
    );
    let res = solve_newton(&p, &[0.0; 2], &NewtonOptions::default()).unwrap();
    let rep = uniform_integrability_check(&res, &p);
    assert!(rep.ok);
    for w in &rep.windows {
        assert!(w.max_sum <= w.window_measure * (1.0 + 1e-12));
        assert!(w.window_measure <= w.delta * 1.3, "{w:?}");
    }

    let family = ProblemFamily::new(
        1.0,
        orifice(),
        1.5,
        ForceSpec::Sum {
            terms: vec![mode(1, 0, 3.0), mode(1, 1, 1.0)],
        },
    )
    .unwrap();
    let sched = ContinuationSchedule::fixed_modes(&[0.2, 0.1, 0.05], 16).unwrap();
    let run = continuation_solve(&family, &sched, &NewtonOptions::default(), None).unwrap();
    let rep = &run.steps.last().unwrap().integrability;
    assert!(rep.ok);
    assert!(rep.density_spread <= 2.0, "{rep:?}");
}

#[test]
fn inclusion_near_jumps() {
    // sign law, flow crossing zero on the boundary
    let family = ProblemFamily::new(1.0, JumpFunction::sign(), 1.0, mode(1, 0, 6.0)).unwrap();
    let sched = ContinuationSchedule::fixed_modes(&[0.2, 0.1, 0.05], 9).unwrap();
    let run = continuation_solve(
        &family,
        &sched,
        &NewtonOptions::default(),
        Some(InclusionOptions::default()),
    )
    .unwrap();
    let inc = run.inclusion.unwrap();
    let near: Vec<_> = inc.nodes.iter().filter(|n| n.u_n.abs() < 0.05).collect();
    assert!(!near.is_empty());
    for n in near {
        assert!(n.lower <= -1.0 && n.upper >= 1.0);
        assert!(n.passes());
    }
    assert_eq!(inc.pass_fraction_regular, 1.0);

    // orifice law with u_N crossing b = 1
    let family = ProblemFamily::new(1.0, orifice(), 1.5, mode(1, 0, 6.0)).unwrap();
    let sched = ContinuationSchedule::fixed_modes(&[0.2, 0.1, 0.05, 0.025], 9).unwrap();
    let run = continuation_solve(
        &family,
        &sched,
        &NewtonOptions::default(),
        Some(InclusionOptions::default()),
    )
    .unwrap();
    let inc = run.inclusion.unwrap();
    let at_b: Vec<_> = inc
        .nodes
        .iter()
        .filter(|n| (n.u_n - 1.0).abs() < 0.05)
        .collect();
    assert!(!at_b.is_empty());
    for n in at_b {
        assert!(
            n.lower <= -1e-3 + 1e-12 && n.upper >= 2.0 + 1e-3 - 1e-9,
            "{n:?}"
        );
        assert!(n.passes());
    }
    // multipliers stabilise away from the jump
    let (a, b) = (&run.steps[2].result, &run.steps[3].result);
    for z in 0..a.xi_samples.len() {
        if (b.u_n_samples[z] - 1.0).abs() > 0.1 {
            assert!((a.xi_samples[z] - b.xi_samples[z]).abs() < 1e-2);
        }
    }
}

#[test]
fn multistart_is_deterministic() {
    let p = problem(
        StreamBasis::build(5).unwrap().modes().to_vec(),
        1.0,
        &orifice(),
        0.05,
        &mode(1, 0, 6.0),
        1.5,
    );
    let a = solve_multistart(&p, &[7, 8, 9], &NewtonOptions::default());
    let b = solve_multistart(&p, &[7, 8, 9], &NewtonOptions::default());
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.converged()));
}
