use serde::{Deserialize, Serialize};

use super::{RegularizedProblem, SolveResult};
use crate::quadrature::BoundaryNode;
use crate::superpotential::{JumpFunction, RauchCertificate};

/// Perimeter of the unit square.
const PERIMETER: f64 = 4.0;

/// Lower bound on the boundary integral and upper bound on `||c||_V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub boundary_integral: f64,
    pub boundary_lower_bound: f64,
    pub boundary_margin: f64,
    pub v_norm: f64,
    pub v_norm_bound: f64,
    pub norm_margin: f64,
    pub ok: bool,
}

/// Checks `sum w Theta_eps(u_N) u_N >= -a b |bd O|` and
/// `||c||_V <= (||F||_* + sqrt(||F||_*^2 + 4 nu a b |bd O|)) / (2 nu)`.
pub fn apriori_check(result: &SolveResult, problem: &RegularizedProblem) -> AprioriReport {
    let sys = problem.system();
    let basis = sys.basis();
    let cert = problem.certificate();
    let nu = sys.nu();
    let boundary_integral = weighted_product(problem, result);
    let boundary_lower_bound = -cert.a * cert.b * PERIMETER;
    let f = basis.dual_norm(sys.load());
    let v_norm = basis.v_norm(&result.coeffs);
    let v_norm_bound = (f + (f * f + 4.0 * nu * cert.a * cert.b * PERIMETER).sqrt()) / (2.0 * nu);
    let boundary_margin = boundary_integral - boundary_lower_bound;
    let norm_margin = v_norm_bound - v_norm;
    AprioriReport {
        boundary_integral,
        boundary_lower_bound,
        boundary_margin,
        v_norm,
        v_norm_bound,
        norm_margin,
        ok: boundary_margin >= 0.0 && norm_margin >= 0.0,
    }
}

fn weighted_product(problem: &RegularizedProblem, result: &SolveResult) -> f64 {
    problem
        .system()
        .boundary()
        .iter()
        .zip(&result.xi_samples)
        .zip(&result.u_n_samples)
        .map(|((node, xi), u)| node.weight * xi * u)
        .sum()
}

/// `nu ||c||_V^2 + sum w xi u_N` against `<F, c>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    pub dissipation: f64,
    pub boundary: f64,
    pub work: f64,
    /// `|lhs - rhs|` over the sum of the magnitudes of the three terms.
    pub relative_error: f64,
}

pub fn energy_identity(result: &SolveResult, problem: &RegularizedProblem) -> EnergyIdentity {
    let sys = problem.system();
    let c = &result.coeffs;
    let dissipation: f64 = sys.a_diag().iter().zip(c).map(|(a, c)| a * c * c).sum();
    let boundary = weighted_product(problem, result);
    let work: f64 = sys.load().iter().zip(c).map(|(f, c)| f * c).sum();
    let scale = dissipation.abs() + boundary.abs() + work.abs();
    let relative_error = if scale == 0.0 {
        0.0
    } else {
        (dissipation + boundary - work).abs() / scale
    };
    EnergyIdentity {
        dissipation,
        boundary,
        work,
        relative_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInclusion {
    pub arc: f64,
    pub weight: f64,
    pub u_n: f64,
    pub lower: f64,
    pub upper: f64,
    /// Smallest signed distance of any checked step's `xi` inside the widened interval.
    pub margin: f64,
    pub jump_adjacent: bool,
}

impl NodeInclusion {
    pub fn passes(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub tol_u: f64,
    pub tol_xi: f64,
    pub steps_checked: usize,
    pub nodes: Vec<NodeInclusion>,
    pub pass_fraction: f64,
    pub pass_fraction_regular: f64,
    pub violating_measure: f64,
    pub min_margin: f64,
    pub min_margin_regular: f64,
}

/// Checks, at every boundary node of the last (finest) step, that the multiplier
/// of each supplied step lies in `[Theta_lower, Theta_upper]` of the law over
/// `|t - u_N(z)| <= tol_u`, widened by `tol_xi`. Nodes whose normal velocity is
/// within the coarsest step's `eps` of a jump are reported separately.
///
/// # Panics
/// If fewer than two steps are given or the steps have different boundary sizes.
pub fn inclusion_check(
    steps: &[SolveResult],
    theta: &JumpFunction,
    tol_u: f64,
    tol_xi: f64,
    boundary: &[BoundaryNode],
) -> InclusionReport {
    assert!(steps.len() >= 2, "inclusion check needs at least two steps");
    let finest = steps.last().unwrap();
    let m = finest.u_n_samples.len();
    assert!(
        steps.iter().all(|s| s.xi_samples.len() == m),
        "boundary sizes differ across steps"
    );
    assert_eq!(boundary.len(), m);
    let eps_window = steps.iter().map(|s| s.epsilon).fold(0.0, f64::max);

    let nodes: Vec<NodeInclusion> = (0..m)
        .map(|z| {
            let u = finest.u_n_samples[z];
            let interval = theta.envelopes(tol_u, u).widened(tol_xi);
            let margin = steps
                .iter()
                .map(|s| interval.margin(s.xi_samples[z]))
                .fold(f64::INFINITY, f64::min);
            NodeInclusion {
                arc: boundary[z].arc,
                weight: boundary[z].weight,
                u_n: u,
                lower: interval.lower,
                upper: interval.upper,
                margin,
                jump_adjacent: theta
                    .breakpoints()
                    .iter()
                    .any(|b| (u - b).abs() < eps_window),
            }
        })
        .collect();

    let fraction = |it: &mut dyn Iterator<Item = &NodeInclusion>| {
        let (mut total, mut pass) = (0usize, 0usize);
        for n in it {
            total += 1;
            pass += n.passes() as usize;
        }
        if total == 0 {
            1.0
        } else {
            pass as f64 / total as f64
        }
    };
    let min_of = |it: &mut dyn Iterator<Item = &NodeInclusion>| {
        it.map(|n| n.margin).fold(f64::INFINITY, f64::min)
    };
    InclusionReport {
        tol_u,
        tol_xi,
        steps_checked: steps.len(),
        pass_fraction: fraction(&mut nodes.iter()),
        pass_fraction_regular: fraction(&mut nodes.iter().filter(|n| !n.jump_adjacent)),
        violating_measure: nodes.iter().filter(|n| !n.passes()).map(|n| n.weight).sum(),
        min_margin: min_of(&mut nodes.iter()),
        min_margin_regular: min_of(&mut nodes.iter().filter(|n| !n.jump_adjacent)),
        nodes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiWindow {
    pub delta: f64,
    /// Largest `sum w |xi|` over perimeter windows of length `delta`.
    pub max_sum: f64,
    /// Quadrature measure of the maximising window.
    pub window_measure: f64,
    pub bound: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiReport {
    pub s0: f64,
    /// `(1/s0) (sum w xi u_N + 2 a b |bd O|)`.
    pub tail_constant: f64,
    /// `sup_{|s| <= s0} |Theta_eps|`, bounded by the certificate's `b`.
    pub local_bound: f64,
    pub windows: Vec<UiWindow>,
    /// Largest over smallest window density `max_sum / delta`.
    pub density_spread: f64,
    pub ok: bool,
}

pub const UI_DELTAS: [f64; 4] = [0.5, 0.25, 0.1, 0.05];

/// Sliding-window estimate of `sup_{|Gamma| <= delta} int_Gamma |xi|`, checked
/// against `b |Gamma| + (1/s0)(c + 2ab|bd O|)` with `s0 = a` from the certificate.
pub fn uniform_integrability_check(result: &SolveResult, problem: &RegularizedProblem) -> UiReport {
    let nodes = problem.system().boundary();
    let cert: &RauchCertificate = problem.certificate();
    let s0 = cert.a;
    let c_comp = weighted_product(problem, result);
    let tail_constant = (c_comp + 2.0 * cert.a * cert.b * PERIMETER) / s0;
    let local_bound = cert.b;

    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&i, &j| nodes[i].arc.total_cmp(&nodes[j].arc));
    let arcs: Vec<f64> = order.iter().map(|&i| nodes[i].arc).collect();
    let mass: Vec<f64> = order
        .iter()
        .map(|&i| nodes[i].weight * result.xi_samples[i].abs())
        .collect();
    let wts: Vec<f64> = order.iter().map(|&i| nodes[i].weight).collect();
    let m = arcs.len();

    let windows: Vec<UiWindow> = UI_DELTAS
        .iter()
        .map(|&delta| {
            let (mut best, mut best_measure) = (0.0f64, 0.0f64);
            for start in 0..m {
                let (mut sum, mut measure) = (0.0, 0.0);
                for step in 0..m {
                    let j = (start + step) % m;
                    let mut offset = arcs[j] - arcs[start];
                    if offset < 0.0 {
                        offset += PERIMETER;
                    }
                    if offset >= delta {
                        break;
                    }
                    sum += mass[j];
                    measure += wts[j];
                }
                if sum > best {
                    best = sum;
                    best_measure = measure;
                }
            }
            UiWindow {
                delta,
                max_sum: best,
                window_measure: best_measure,
                bound: local_bound * best_measure + tail_constant,
                density: best / delta,
            }
        })
        .collect();
    let densities: Vec<f64> = windows.iter().map(|w| w.density).collect();
    let (dmin, dmax) = densities
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    UiReport {
        s0,
        tail_constant,
        local_bound,
        ok: windows.iter().all(|w| w.max_sum <= w.bound),
        density_spread: if dmin > 0.0 { dmax / dmin } else { 1.0 },
        windows,
    }
}
