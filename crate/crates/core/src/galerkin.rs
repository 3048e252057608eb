//! Divergence-free Galerkin discretisation on the unit square.
//!
//! Velocities are `u = (d psi/dy, -d psi/dx)` for stream functions
//! `psi_kl = cos(k pi x) cos(l pi y)`. Every basis field is solenoidal and has
//! zero tangential trace, while the normal trace stays free. In 2-D the
//! rotation is the scalar `rot u = -lap psi`, and `rot u x v` is the planar
//! vector `rot u (-v2, v1)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{BoundaryNode, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalerkinError {
    #[error("interior quadrature order {order} is below 2 * {max_frequency} + 2")]
    InsufficientQuadrature { order: usize, max_frequency: u32 },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("invalid force: {0}")]
    InvalidForce(String),
    #[error("expected {expected} coefficients, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Stream-function mode `(k, l)`.
pub type Mode = (u32, u32);

fn gamma(k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        0.5
    }
}

/// Velocity of the single mode `(k, l)` with unit coefficient.
#[inline]
pub fn mode_velocity((k, l): Mode, x: f64, y: f64) -> (f64, f64) {
    let (kp, lp) = (k as f64 * PI, l as f64 * PI);
    (
        -lp * (kp * x).cos() * (lp * y).sin(),
        kp * (kp * x).sin() * (lp * y).cos(),
    )
}

/// `rot u = -lap psi` of the single mode `(k, l)`.
#[inline]
pub fn mode_vorticity((k, l): Mode, x: f64, y: f64) -> f64 {
    let (kp, lp) = (k as f64 * PI, l as f64 * PI);
    (kp * kp + lp * lp) * (kp * x).cos() * (lp * y).cos()
}

/// Ordered set of stream modes spanning the discrete velocity space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamBasis {
    modes: Vec<Mode>,
}

impl StreamBasis {
    /// All modes with `k^2 + l^2 <= n_max_energy`, ordered by energy, then lexicographically.
    pub fn build(n_max_energy: u32) -> Result<Self, GalerkinError> {
        if n_max_energy == 0 {
            return Err(GalerkinError::InvalidBasis(
                "n_max_energy must be >= 1".into(),
            ));
        }
        let kmax = (n_max_energy as f64).sqrt().floor() as u32;
        let modes = (0..=kmax)
            .flat_map(|k| (0..=kmax).map(move |l| (k, l)))
            .filter(|&(k, l)| (k, l) != (0, 0) && k * k + l * l <= n_max_energy)
            .collect();
        Self::from_modes(modes)
    }

    /// Basis from an explicit mode list, put in canonical order.
    pub fn from_modes(mut modes: Vec<Mode>) -> Result<Self, GalerkinError> {
        if modes.is_empty() {
            return Err(GalerkinError::InvalidBasis("empty basis".into()));
        }
        if modes.contains(&(0, 0)) {
            return Err(GalerkinError::InvalidBasis(
                "mode (0, 0) has zero velocity".into(),
            ));
        }
        modes.sort_by_key(|&(k, l)| (k * k + l * l, k, l));
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(GalerkinError::InvalidBasis("duplicate mode".into()));
        }
        Ok(StreamBasis { modes })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_frequency(&self) -> u32 {
        self.modes.iter().map(|&(k, l)| k.max(l)).max().unwrap_or(0)
    }

    pub fn index_of(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    pub fn energy(&self, i: usize) -> f64 {
        let (k, l) = self.modes[i];
        (k * k + l * l) as f64
    }

    /// `int rot(u_i)^2 = pi^4 (k^2 + l^2)^2 gamma_kl`: the diagonal of the norm `||rot .||^2`.
    pub fn norm_weight(&self, i: usize) -> f64 {
        let (k, l) = self.modes[i];
        PI.powi(4) * self.energy(i).powi(2) * gamma(k) * gamma(l)
    }

    /// `int |u_i|^2 = pi^2 (k^2 + l^2) gamma_kl`: the L2 Gram diagonal.
    pub fn l2_mass(&self, i: usize) -> f64 {
        let (k, l) = self.modes[i];
        PI * PI * self.energy(i) * gamma(k) * gamma(l)
    }

    pub fn norm_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.norm_weight(i)).collect()
    }

    /// `||c||_V = ||rot u||_{L2}`.
    pub fn v_norm(&self, coeffs: &[f64]) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.norm_weight(i) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Dual norm of a load vector with respect to [`v_norm`](Self::v_norm).
    pub fn dual_norm(&self, load: &[f64]) -> f64 {
        load.iter()
            .enumerate()
            .map(|(i, f)| f * f / self.norm_weight(i))
            .sum::<f64>()
            .sqrt()
    }

    /// `||u||_{L2}` of the velocity with these coefficients.
    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.l2_mass(i) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn velocity_at(&self, coeffs: &[f64], (x, y): (f64, f64)) -> (f64, f64) {
        debug_assert_eq!(coeffs.len(), self.len());
        self.modes
            .iter()
            .zip(coeffs)
            .fold((0.0, 0.0), |(ux, uy), (&m, &c)| {
                let (vx, vy) = mode_velocity(m, x, y);
                (ux + c * vx, uy + c * vy)
            })
    }

    pub fn vorticity_at(&self, coeffs: &[f64], (x, y): (f64, f64)) -> f64 {
        self.modes
            .iter()
            .zip(coeffs)
            .map(|(&m, &c)| c * mode_vorticity(m, x, y))
            .sum()
    }

    /// Coefficients expressed in `self`, copied from `from` by mode matching.
    /// Modes absent from `from` get zero; modes absent from `self` are dropped.
    pub fn inject(&self, coeffs: &[f64], from: &StreamBasis) -> Vec<f64> {
        self.modes
            .iter()
            .map(|&m| from.index_of(m).map_or(0.0, |j| coeffs[j]))
            .collect()
    }
}

/// `int_0^1 cos(p pi x) cos(q pi x) sin(r pi x) dx` for `p, q, r <= kmax`, by Gauss quadrature.
struct TripleTable {
    size: usize,
    data: Vec<f64>,
}

impl TripleTable {
    fn new(kmax: u32, quad: &QuadratureRule) -> Self {
        let size = kmax as usize + 1;
        let mut data = vec![0.0; size * size * size];
        let line: Vec<(f64, f64)> = quad.line().collect();
        for p in 0..size {
            for q in p..size {
                for r in 0..size {
                    let v: f64 = line
                        .iter()
                        .map(|&(x, w)| {
                            let t = PI * x;
                            w * (p as f64 * t).cos() * (q as f64 * t).cos() * (r as f64 * t).sin()
                        })
                        .sum();
                    data[(p * size + q) * size + r] = v;
                    data[(q * size + p) * size + r] = v;
                }
            }
        }
        TripleTable { size, data }
    }

    #[inline]
    fn get(&self, p: u32, q: u32, r: u32) -> f64 {
        self.data[(p as usize * self.size + q as usize) * self.size + r as usize]
    }
}

/// Assembled discrete operators of the rotational weak form.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    basis: StreamBasis,
    nu: f64,
    a_diag: Vec<f64>,
    /// `btensor[(i*n + j)*n + k] = <B(psi_i, psi_j), psi_k>`
    btensor: Vec<f64>,
    /// Row-major `m x n`: normal trace of basis field `i` at boundary node `m`.
    trace: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    load: Vec<f64>,
}

/// Builds the diffusion diagonal analytically, the convection tensor by
/// interior quadrature and the normal-trace matrix at the boundary nodes.
pub fn assemble(
    basis: &StreamBasis,
    nu: f64,
    quad: &QuadratureRule,
) -> Result<GalerkinSystem, GalerkinError> {
    let kmax = basis.max_frequency();
    if quad.interior_order() < 2 * kmax as usize + 2 {
        return Err(GalerkinError::InsufficientQuadrature {
            order: quad.interior_order(),
            max_frequency: kmax,
        });
    }
    let n = basis.len();
    let a_diag = (0..n).map(|i| nu * basis.norm_weight(i)).collect();

    let table = TripleTable::new(kmax, quad);
    let modes = basis.modes();
    let pi4 = PI.powi(4);
    let mut btensor = vec![0.0; n * n * n];
    btensor
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(i, slab)| {
            let (ki, li) = modes[i];
            let ei = (ki * ki + li * li) as f64;
            for (j, &(kj, lj)) in modes.iter().enumerate() {
                for (k, &(kk, lk)) in modes.iter().enumerate() {
                    let first = (kj * lk) as f64 * table.get(ki, kk, kj) * table.get(li, lj, lk);
                    let second = (lj * kk) as f64 * table.get(ki, kj, kk) * table.get(li, lk, lj);
                    slab[j * n + k] = pi4 * ei * (first - second);
                }
            }
        });

    let boundary = quad.boundary().to_vec();
    let mut trace = Vec::with_capacity(boundary.len() * n);
    for node in &boundary {
        let (nx, ny) = node.edge.outward_normal();
        for &m in modes {
            let (ux, uy) = mode_velocity(m, node.x, node.y);
            trace.push(ux * nx + uy * ny);
        }
    }

    Ok(GalerkinSystem {
        basis: basis.clone(),
        nu,
        a_diag,
        btensor,
        trace,
        boundary,
        load: vec![0.0; n],
    })
}

/// `nu int rot(u_i) rot(u_j)` by tensor quadrature; the full matrix, used to
/// check the analytic diagonal.
pub fn diffusion_by_quadrature(
    basis: &StreamBasis,
    nu: f64,
    quad: &QuadratureRule,
) -> DMatrix<f64> {
    let n = basis.len();
    let mut a = DMatrix::zeros(n, n);
    for (x, y, w) in quad.interior() {
        let rot: Vec<f64> = basis
            .modes()
            .iter()
            .map(|&m| mode_vorticity(m, x, y))
            .collect();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += nu * w * rot[i] * rot[j];
            }
        }
    }
    a
}

impl GalerkinSystem {
    pub fn basis(&self) -> &StreamBasis {
        &self.basis
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn a_diag(&self) -> &[f64] {
        &self.a_diag
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn btensor(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.len();
        self.btensor[(i * n + j) * n + k]
    }

    pub fn trace_entry(&self, node: usize, i: usize) -> f64 {
        self.trace[node * self.len() + i]
    }

    pub fn set_load(&mut self, load: Vec<f64>) -> Result<(), GalerkinError> {
        if load.len() != self.len() {
            return Err(GalerkinError::DimensionMismatch {
                expected: self.len(),
                got: load.len(),
            });
        }
        self.load = load;
        Ok(())
    }

    pub fn with_load(mut self, load: Vec<f64>) -> Result<Self, GalerkinError> {
        self.set_load(load)?;
        Ok(self)
    }

    /// `A c`.
    pub fn apply_a(&self, c: &[f64]) -> Vec<f64> {
        self.a_diag.iter().zip(c).map(|(a, c)| a * c).collect()
    }

    /// `sum_ijk B[i,j,k] u_i v_j w_k = <B(u, v), w>`.
    pub fn trilinear(&self, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let n = self.len();
        let mut total = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let uv = u[i] * v[j];
                if uv == 0.0 {
                    continue;
                }
                let row = &self.btensor[(i * n + j) * n..(i * n + j + 1) * n];
                total += uv * row.iter().zip(w).map(|(b, w)| b * w).sum::<f64>();
            }
        }
        total
    }

    /// `B[c]_k = <B(u, u), psi_k>`.
    pub fn convection(&self, c: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let cc = c[i] * c[j];
                if cc == 0.0 {
                    continue;
                }
                let row = &self.btensor[(i * n + j) * n..(i * n + j + 1) * n];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += cc * b;
                }
            }
        }
        out
    }

    /// `d B[c]_k / d c_m = sum_j (B[m,j,k] + B[j,m,k]) c_j`, as an `n x n` matrix indexed `(k, m)`.
    pub fn convection_jacobian(&self, c: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut jac = DMatrix::zeros(n, n);
        for m in 0..n {
            for j in 0..n {
                if c[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    jac[(k, m)] += (self.btensor[(m * n + j) * n + k]
                        + self.btensor[(j * n + m) * n + k])
                        * c[j];
                }
            }
        }
        jac
    }

    /// Normal velocity `u_N = T c` at every boundary node.
    pub fn normal_trace(&self, c: &[f64]) -> Vec<f64> {
        let n = self.len();
        self.trace
            .chunks_exact(n)
            .map(|row| row.iter().zip(c).map(|(t, c)| t * c).sum())
            .collect()
    }

    /// `T^T diag(w) g`: the load of the boundary density `g` sampled at the nodes.
    pub fn trace_transpose_weighted(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for ((row, node), &gm) in self.trace.chunks_exact(n).zip(&self.boundary).zip(g) {
            let s = node.weight * gm;
            if s == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(row) {
                *o += s * t;
            }
        }
        out
    }

    /// `T^T diag(w d) T`.
    pub fn trace_gram_weighted(&self, d: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        for ((row, node), &dm) in self.trace.chunks_exact(n).zip(&self.boundary).zip(d) {
            let s = node.weight * dm;
            if s == 0.0 {
                continue;
            }
            for i in 0..n {
                let si = s * row[i];
                for j in 0..n {
                    out[(i, j)] += si * row[j];
                }
            }
        }
        out
    }

    pub fn dump(&self, include_btensor: bool) -> SystemDump {
        SystemDump {
            modes: self.basis.modes().to_vec(),
            nu: self.nu,
            a_diag: self.a_diag.clone(),
            load: self.load.clone(),
            boundary_nodes: self.boundary.len(),
            btensor: include_btensor.then(|| self.btensor.clone()),
        }
    }
}

/// Serialisable summary of an assembled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDump {
    pub modes: Vec<Mode>,
    pub nu: f64,
    pub a_diag: Vec<f64>,
    pub load: Vec<f64>,
    pub boundary_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub btensor: Option<Vec<f64>>,
}

/// Volume force densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceSpec {
    Zero,
    /// Spatially constant force.
    Constant {
        value: [f64; 2],
    },
    /// `amplitude` times the velocity field of stream mode `(k, l)`, divided by
    /// its L2 norm when `normalized`.
    Mode {
        k: u32,
        l: u32,
        amplitude: f64,
        #[serde(default)]
        normalized: bool,
    },
    Sum {
        terms: Vec<ForceSpec>,
    },
}

impl ForceSpec {
    pub fn validate(&self) -> Result<(), GalerkinError> {
        match self {
            ForceSpec::Zero => Ok(()),
            ForceSpec::Constant { value } if value.iter().all(|v| v.is_finite()) => Ok(()),
            ForceSpec::Constant { .. } => {
                Err(GalerkinError::InvalidForce("non-finite constant".into()))
            }
            ForceSpec::Mode { k: 0, l: 0, .. } => {
                Err(GalerkinError::InvalidForce("mode (0, 0)".into()))
            }
            ForceSpec::Mode { amplitude, .. } if !amplitude.is_finite() => {
                Err(GalerkinError::InvalidForce("non-finite amplitude".into()))
            }
            ForceSpec::Mode { .. } => Ok(()),
            ForceSpec::Sum { terms } => terms.iter().try_for_each(ForceSpec::validate),
        }
    }

    fn mode_scale(k: u32, l: u32, amplitude: f64, normalized: bool) -> f64 {
        if normalized {
            let single = StreamBasis {
                modes: vec![(k, l)],
            };
            amplitude / single.l2_mass(0).sqrt()
        } else {
            amplitude
        }
    }

    pub fn field_at(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            ForceSpec::Zero => (0.0, 0.0),
            ForceSpec::Constant { value } => (value[0], value[1]),
            ForceSpec::Mode {
                k,
                l,
                amplitude,
                normalized,
            } => {
                let s = Self::mode_scale(*k, *l, *amplitude, *normalized);
                let (vx, vy) = mode_velocity((*k, *l), x, y);
                (s * vx, s * vy)
            }
            ForceSpec::Sum { terms } => terms.iter().fold((0.0, 0.0), |(ax, ay), t| {
                let (fx, fy) = t.field_at(x, y);
                (ax + fx, ay + fy)
            }),
        }
    }

    /// `F_i = int f . u_i`. Stream-mode fields use the closed-form Gram
    /// diagonal (modes are L2-orthogonal); other fields use interior quadrature.
    pub fn load(&self, basis: &StreamBasis, quad: &QuadratureRule) -> Vec<f64> {
        match self {
            ForceSpec::Zero => vec![0.0; basis.len()],
            ForceSpec::Constant { .. } => {
                assemble_load_quadrature(basis, quad, |x, y| self.field_at(x, y))
            }
            ForceSpec::Mode {
                k,
                l,
                amplitude,
                normalized,
            } => {
                let s = Self::mode_scale(*k, *l, *amplitude, *normalized);
                let mut out = vec![0.0; basis.len()];
                if let Some(i) = basis.index_of((*k, *l)) {
                    out[i] = s * basis.l2_mass(i);
                }
                out
            }
            ForceSpec::Sum { terms } => terms.iter().fold(vec![0.0; basis.len()], |mut acc, t| {
                for (a, v) in acc.iter_mut().zip(t.load(basis, quad)) {
                    *a += v;
                }
                acc
            }),
        }
    }
}

/// `F_i = int f . u_i` by interior quadrature for an arbitrary field.
pub fn assemble_load_quadrature<F: Fn(f64, f64) -> (f64, f64)>(
    basis: &StreamBasis,
    quad: &QuadratureRule,
    force: F,
) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    for (x, y, w) in quad.interior() {
        let (fx, fy) = force(x, y);
        if fx == 0.0 && fy == 0.0 {
            continue;
        }
        for (o, &m) in out.iter_mut().zip(basis.modes()) {
            let (ux, uy) = mode_velocity(m, x, y);
            *o += w * (fx * ux + fy * uy);
        }
    }
    out
}
