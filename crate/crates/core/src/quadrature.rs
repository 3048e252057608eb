//! Gauss–Legendre rules: a fixed 1-D rule, adaptive subdivision, and the
//! tensor/perimeter rules used on the unit square.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(order).as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        GaussRule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn adaptive_rule() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(15))
}

/// Adaptive Gauss–Legendre quadrature by recursive bisection. The local error
/// estimate is the difference between one panel and its two halves. Panels
/// also stop once that difference is at rounding level relative to `int |f|`,
/// so tolerances below machine precision do not force exhaustive bisection.
pub fn adaptive_gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = adaptive_rule();
    let whole = rule.integrate(a, b, f);
    let floor = 8.0 * f64::EPSILON * rule.integrate(a, b, |x| f(x).abs());
    adaptive_step(f, rule, a, b, whole, tol, floor, 0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussRule,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule.integrate(a, m, f);
    let right = rule.integrate(m, b, f);
    let refined = left + right;
    if (refined - whole).abs() <= tol.max(floor) || depth >= 40 || m <= a || m >= b {
        return refined;
    }
    adaptive_step(f, rule, a, m, left, 0.5 * tol, floor, depth + 1)
        + adaptive_step(f, rule, m, b, right, 0.5 * tol, floor, depth + 1)
}

/// One of the four sides of the unit square, listed counter-clockwise from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    pub fn outward_normal(self) -> (f64, f64) {
        match self {
            Edge::Bottom => (0.0, -1.0),
            Edge::Right => (1.0, 0.0),
            Edge::Top => (0.0, 1.0),
            Edge::Left => (-1.0, 0.0),
        }
    }

    /// Counter-clockwise unit tangent.
    pub fn tangent(self) -> (f64, f64) {
        let (nx, ny) = self.outward_normal();
        (-ny, nx)
    }

    /// Point at local parameter `s in [0, 1]`, walking counter-clockwise.
    fn point(self, s: f64) -> (f64, f64) {
        match self {
            Edge::Bottom => (s, 0.0),
            Edge::Right => (1.0, s),
            Edge::Top => (1.0 - s, 1.0),
            Edge::Left => (0.0, 1.0 - s),
        }
    }

    fn offset(self) -> f64 {
        match self {
            Edge::Bottom => 0.0,
            Edge::Right => 1.0,
            Edge::Top => 2.0,
            Edge::Left => 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub x: f64,
    pub y: f64,
    pub edge: Edge,
    /// Arc-length coordinate along the perimeter, in `[0, 4)`.
    pub arc: f64,
    pub weight: f64,
}

/// Interior tensor rule on `[0,1]^2` and composite perimeter rule.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// 1-D nodes/weights on `[0, 1]` whose tensor product is the interior rule.
    line_nodes: Vec<f64>,
    line_weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    boundary_panels: usize,
    boundary_order: usize,
}

/// Parameters of a [`QuadratureRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub interior_order: usize,
    pub boundary_panels: usize,
    pub boundary_order: usize,
}

impl QuadratureSpec {
    /// Default orders for a basis whose largest single-direction frequency is `max_freq`.
    pub fn for_max_frequency(max_freq: u32) -> Self {
        QuadratureSpec {
            interior_order: 3 * max_freq as usize + 12,
            boundary_panels: 16,
            boundary_order: 4,
        }
    }
}

impl QuadratureRule {
    pub fn new(spec: QuadratureSpec) -> Self {
        let line = GaussRule::new(spec.interior_order);
        let (line_nodes, line_weights) = line.mapped(0.0, 1.0).unzip();

        let panel_rule = GaussRule::new(spec.boundary_order);
        let panels = spec.boundary_panels.max(1);
        let h = 1.0 / panels as f64;
        let mut boundary = Vec::with_capacity(4 * panels * spec.boundary_order);
        for edge in Edge::ALL {
            for p in 0..panels {
                for (s, w) in panel_rule.mapped(p as f64 * h, (p + 1) as f64 * h) {
                    let (x, y) = edge.point(s);
                    boundary.push(BoundaryNode {
                        x,
                        y,
                        edge,
                        arc: edge.offset() + s,
                        weight: w,
                    });
                }
            }
        }
        QuadratureRule {
            line_nodes,
            line_weights,
            boundary,
            boundary_panels: panels,
            boundary_order: spec.boundary_order,
        }
    }

    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            interior_order: self.line_nodes.len(),
            boundary_panels: self.boundary_panels,
            boundary_order: self.boundary_order,
        }
    }

    pub fn interior_order(&self) -> usize {
        self.line_nodes.len()
    }

    /// 1-D Gauss rule on `[0, 1]` underlying the tensor interior rule.
    pub fn line(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.line_nodes
            .iter()
            .copied()
            .zip(self.line_weights.iter().copied())
    }

    /// Interior nodes `(x, y, weight)` of the tensor rule.
    pub fn interior(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.line()
            .flat_map(move |(x, wx)| self.line().map(move |(y, wy)| (x, y, wx * wy)))
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_weights(&self) -> Vec<f64> {
        self.boundary.iter().map(|b| b.weight).collect()
    }

    /// Integral of a closure over the unit square.
    pub fn integrate_interior<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.interior().map(|(x, y, w)| w * f(x, y)).sum()
    }
}
