//! The local excitable-unit vector field, diffusive coupling, assembled
//! network right-hand side and its analytic Jacobian.
//!
//! Each unit is a two-dimensional conductance-based spiking neuron with
//! membrane potential `x` (mV) and gating variable `y` (dimensionless).
//! Units are coupled diffusively: unit `i` receives
//! `eps_x * sum_{j in neighbors(i)} (x_j - x_i)` on its `x`-equation and the
//! analogous term with `eps_y` on its `y`-equation.
//!
//! Note on units: the `x`-coupling term is *not* divided by the membrane
//! capacitance. The coupling acts as a current, so `eps_x` is understood to
//! already absorb the factor `1/C`. Dividing by `C` a second time would be
//! wrong (it is invisible at the default `C = 1` but not in general).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network state vector in `R^{2N}`, interleaved as `[x_1, y_1, x_2, y_2, ...]`.
///
/// The interleaved layout keeps each unit's pair adjacent, which is what the
/// per-unit local dynamics loop touches.
pub type NetworkState = Vec<f64>;

/// Constants of a single excitable unit plus the drive current.
///
/// Defaults are the reference parameter set used throughout; all quantities
/// are in the usual electrophysiological units (mV, ms, mS/cm², µF/cm²,
/// µA/cm²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Gating time constant τ (ms).
    pub tau: f64,
    /// Membrane capacitance C (µF/cm²).
    pub capacitance: f64,
    /// Leak reversal potential (mV).
    pub e_leak: f64,
    /// Sodium reversal potential (mV).
    pub e_na: f64,
    /// Potassium reversal potential (mV).
    pub e_k: f64,
    /// Leak conductance (mS/cm²).
    pub g_leak: f64,
    /// Sodium conductance (mS/cm²).
    pub g_na: f64,
    /// Potassium conductance (mS/cm²).
    pub g_k: f64,
    /// Sodium activation midpoint (mV).
    pub m_half: f64,
    /// Sodium activation slope (mV).
    pub k_m: f64,
    /// Potassium activation midpoint (mV).
    pub n_half: f64,
    /// Potassium activation slope (mV).
    pub k_n: f64,
    /// Drive current I (µA/cm²).
    pub current: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            tau: 0.16,
            capacitance: 1.0,
            e_leak: -80.0,
            e_na: 60.0,
            e_k: -90.0,
            g_leak: 8.0,
            g_na: 20.0,
            g_k: 10.0,
            m_half: -20.0,
            k_m: 15.0,
            n_half: -25.0,
            k_n: 5.0,
            current: 2.0,
        }
    }
}

impl ModelParams {
    /// Reference parameters with a different drive current.
    pub fn with_current(current: f64) -> Self {
        ModelParams {
            current,
            ..ModelParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("capacitance", self.capacitance),
            ("g_leak", self.g_leak),
            ("g_na", self.g_na),
            ("g_k", self.g_k),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.k_m == 0.0 || self.k_n == 0.0 {
            return Err(Error::InvalidParameter("k_m and k_n must be nonzero".into()));
        }
        let all = [
            self.tau,
            self.capacitance,
            self.e_leak,
            self.e_na,
            self.e_k,
            self.g_leak,
            self.g_na,
            self.g_k,
            self.m_half,
            self.k_m,
            self.n_half,
            self.k_n,
            self.current,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ModelParams".into()));
        }
        Ok(())
    }
}

/// Logistic activation `1 / (1 + exp((half - x) / slope))`.
///
/// Strictly increasing in `x` for positive `slope`.
pub fn activation(x: f64, half: f64, slope: f64) -> Result<f64> {
    if slope == 0.0 {
        return Err(Error::InvalidParameter("activation slope must be nonzero".into()));
    }
    if !x.is_finite() || !half.is_finite() || !slope.is_finite() {
        return Err(Error::NonFinite("activation input".into()));
    }
    Ok(logistic(x, half, slope))
}

#[inline(always)]
fn logistic(x: f64, half: f64, slope: f64) -> f64 {
    1.0 / (1.0 + ((half - x) / slope).exp())
}

/// Local vector field of one unit: `(dx/dt, dy/dt)`.
pub fn local_rhs(x: f64, y: f64, p: &ModelParams) -> Result<(f64, f64)> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("local_rhs input".into()));
    }
    Ok(local_rhs_unchecked(x, y, p))
}

#[inline(always)]
pub(crate) fn local_rhs_unchecked(x: f64, y: f64, p: &ModelParams) -> (f64, f64) {
    let m = logistic(x, p.m_half, p.k_m);
    let n = logistic(x, p.n_half, p.k_n);
    let dx = (p.current
        - p.g_leak * (x - p.e_leak)
        - p.g_na * m * (x - p.e_na)
        - p.g_k * y * (x - p.e_k))
        / p.capacitance;
    let dy = (n - y) / p.tau;
    (dx, dy)
}

/// Analytic Jacobian of the local vector field, row-major `[[fxx, fxy], [fyx, fyy]]`.
#[inline]
pub fn local_jacobian(x: f64, y: f64, p: &ModelParams) -> [[f64; 2]; 2] {
    let m = logistic(x, p.m_half, p.k_m);
    let dm = m * (1.0 - m) / p.k_m;
    let n = logistic(x, p.n_half, p.k_n);
    let dn = n * (1.0 - n) / p.k_n;
    let fxx = (-p.g_leak - p.g_na * (dm * (x - p.e_na) + m) - p.g_k * y) / p.capacitance;
    let fxy = -p.g_k * (x - p.e_k) / p.capacitance;
    let fyx = dn / p.tau;
    let fyy = -1.0 / p.tau;
    [[fxx, fxy], [fyx, fyy]]
}

/// One undirected coupled edge with its per-variable strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStrength {
    /// Endpoints, 0-based, `a < b`.
    pub a: usize,
    pub b: usize,
    /// Strength on the `x`-equations of both endpoints.
    pub eps_x: f64,
    /// Strength on the `y`-equations of both endpoints.
    pub eps_y: f64,
    /// Whether a per-edge override replaced the global strengths here.
    pub overridden: bool,
}

/// Network topology and coupling strengths.
///
/// The adjacency is undirected without self-loops. Global strengths `eps_x`
/// and `eps_y` apply to every edge unless a per-edge override replaces them
/// (on both variables at once, matching how per-edge couplings are used).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    n_units: usize,
    edges: Vec<(usize, usize)>,
    eps_x: f64,
    eps_y: f64,
    edge_overrides: BTreeMap<(usize, usize), f64>,
    strengths: Vec<EdgeStrength>,
}

impl CouplingConfig {
    /// Build a coupling configuration from an undirected edge list (0-based).
    pub fn new(n_units: usize, edges: &[(usize, usize)], eps_x: f64, eps_y: f64) -> Result<Self> {
        let mut normalized = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on unit {}", i + 1)));
            }
            if i >= n_units || j >= n_units {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) out of range for {} units",
                    i + 1,
                    j + 1,
                    n_units
                )));
            }
            normalized.push((i.min(j), i.max(j)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        if !(eps_x >= 0.0) || !(eps_y >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling strengths must be >= 0, got eps_x={eps_x}, eps_y={eps_y}"
            )));
        }
        let mut cfg = CouplingConfig {
            n_units,
            edges: normalized,
            eps_x,
            eps_y,
            edge_overrides: BTreeMap::new(),
            strengths: Vec::new(),
        };
        cfg.rebuild_strengths();
        Ok(cfg)
    }

    /// A single uncoupled unit.
    pub fn single_unit() -> Self {
        CouplingConfig::new(1, &[], 0.0, 0.0).expect("valid")
    }

    /// Two units on one edge with equal strength on both variables.
    pub fn pair(eps: f64) -> Result<Self> {
        CouplingConfig::new(2, &[(0, 1)], eps, eps)
    }

    /// Two units on one edge with separate strengths per variable.
    pub fn pair_xy(eps_x: f64, eps_y: f64) -> Result<Self> {
        CouplingConfig::new(2, &[(0, 1)], eps_x, eps_y)
    }

    /// Replace the strength on one edge (applies to both variables, both
    /// directions). The edge must exist.
    pub fn with_override(mut self, i: usize, j: usize, eps: f64) -> Result<Self> {
        let key = (i.min(j), i.max(j));
        if !self.edges.contains(&key) {
            return Err(Error::InvalidParameter(format!(
                "override refers to missing edge ({}, {})",
                i + 1,
                j + 1
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("override must be >= 0, got {eps}")));
        }
        self.edge_overrides.insert(key, eps);
        self.rebuild_strengths();
        Ok(self)
    }

    /// Same topology and overrides with new global strengths.
    pub fn with_eps(mut self, eps_x: f64, eps_y: f64) -> Self {
        self.eps_x = eps_x.max(0.0);
        self.eps_y = eps_y.max(0.0);
        self.rebuild_strengths();
        self
    }

    fn rebuild_strengths(&mut self) {
        self.strengths = self
            .edges
            .iter()
            .map(|&(a, b)| match self.edge_overrides.get(&(a, b)) {
                Some(&e) => EdgeStrength {
                    a,
                    b,
                    eps_x: e,
                    eps_y: e,
                    overridden: true,
                },
                None => EdgeStrength {
                    a,
                    b,
                    eps_x: self.eps_x,
                    eps_y: self.eps_y,
                    overridden: false,
                },
            })
            .collect();
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    /// State-space dimension `2N`.
    pub fn dim(&self) -> usize {
        2 * self.n_units
    }

    pub fn eps_x(&self) -> f64 {
        self.eps_x
    }

    pub fn eps_y(&self) -> f64 {
        self.eps_y
    }

    /// Undirected edges, 0-based, each with `a < b`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Effective per-edge strengths after overrides.
    pub fn edge_strengths(&self) -> &[EdgeStrength] {
        &self.strengths
    }

    pub fn degree(&self, unit: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == unit || b == unit).count()
    }

    pub fn neighbors(&self, unit: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == unit {
                    Some(b)
                } else if b == unit {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// True if every unit can reach every other through edges.
    pub fn is_connected(&self) -> bool {
        if self.n_units == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_units];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn check_state_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Serialized form: adjacency as 1-based index pairs, overrides as
/// `[i, j, eps]` triples (also 1-based).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingConfigRepr {
    n_units: usize,
    adjacency: Vec<[usize; 2]>,
    eps_x: f64,
    eps_y: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edge_overrides: Vec<(usize, usize, f64)>,
}

impl Serialize for CouplingConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = CouplingConfigRepr {
            n_units: self.n_units,
            adjacency: self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            eps_x: self.eps_x,
            eps_y: self.eps_y,
            edge_overrides: self
                .edge_overrides
                .iter()
                .map(|(&(a, b), &e)| (a + 1, b + 1, e))
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CouplingConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = CouplingConfigRepr::deserialize(deserializer)?;
        for pair in repr.adjacency.iter().chain(
            repr.edge_overrides
                .iter()
                .map(|t| [t.0, t.1])
                .collect::<Vec<_>>()
                .iter(),
        ) {
            if pair[0] == 0 || pair[1] == 0 {
                return Err(D::Error::custom("unit indices are 1-based; got index 0"));
            }
        }
        let edges: Vec<(usize, usize)> =
            repr.adjacency.iter().map(|&[a, b]| (a - 1, b - 1)).collect();
        let mut cfg = CouplingConfig::new(repr.n_units, &edges, repr.eps_x, repr.eps_y)
            .map_err(D::Error::custom)?;
        for (a, b, e) in repr.edge_overrides {
            cfg = cfg.with_override(a - 1, b - 1, e).map_err(D::Error::custom)?;
        }
        Ok(cfg)
    }
}

/// Assembled network vector field written into `out`.
///
/// No allocation and no input checks; this is the integration hot path.
/// `state` and `out` must both have length `2 * n_units`.
pub fn network_rhs_into(state: &[f64], p: &ModelParams, c: &CouplingConfig, out: &mut [f64]) {
    let n = c.n_units();
    debug_assert_eq!(state.len(), 2 * n);
    debug_assert_eq!(out.len(), 2 * n);
    for i in 0..n {
        let (dx, dy) = local_rhs_unchecked(state[2 * i], state[2 * i + 1], p);
        out[2 * i] = dx;
        out[2 * i + 1] = dy;
    }
    for es in c.edge_strengths() {
        let (ia, ib) = (2 * es.a, 2 * es.b);
        let dxa = state[ib] - state[ia];
        let dya = state[ib + 1] - state[ia + 1];
        out[ia] += es.eps_x * dxa;
        out[ib] -= es.eps_x * dxa;
        out[ia + 1] += es.eps_y * dya;
        out[ib + 1] -= es.eps_y * dya;
    }
}

/// Checked variant of [`network_rhs_into`] returning a fresh vector.
pub fn network_rhs(state: &[f64], p: &ModelParams, c: &CouplingConfig) -> Result<NetworkState> {
    c.check_state_len(state.len())?;
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network_rhs input state".into()));
    }
    let mut out = vec![0.0; state.len()];
    network_rhs_into(state, p, c, &mut out);
    Ok(out)
}

/// Analytic Jacobian of the network vector field: block-diagonal local
/// Jacobians plus the coupling Laplacian on the `x`- and `y`-rows.
pub fn network_jacobian(state: &[f64], p: &ModelParams, c: &CouplingConfig) -> Result<DMatrix<f64>> {
    c.check_state_len(state.len())?;
    let dim = c.dim();
    let mut jac = DMatrix::zeros(dim, dim);
    for i in 0..c.n_units() {
        let a = local_jacobian(state[2 * i], state[2 * i + 1], p);
        jac[(2 * i, 2 * i)] = a[0][0];
        jac[(2 * i, 2 * i + 1)] = a[0][1];
        jac[(2 * i + 1, 2 * i)] = a[1][0];
        jac[(2 * i + 1, 2 * i + 1)] = a[1][1];
    }
    for es in c.edge_strengths() {
        let (ia, ib) = (2 * es.a, 2 * es.b);
        jac[(ia, ib)] += es.eps_x;
        jac[(ia, ia)] -= es.eps_x;
        jac[(ib, ia)] += es.eps_x;
        jac[(ib, ib)] -= es.eps_x;
        jac[(ia + 1, ib + 1)] += es.eps_y;
        jac[(ia + 1, ia + 1)] -= es.eps_y;
        jac[(ib + 1, ia + 1)] += es.eps_y;
        jac[(ib + 1, ib + 1)] -= es.eps_y;
    }
    Ok(jac)
}

/// Scratch for repeated Jacobian-vector products along a trajectory.
#[derive(Debug, Clone, Default)]
pub struct VariationalWorkspace {
    local: Vec<[f64; 4]>,
}

/// Applies the network Jacobian at `state` to `k` tangent vectors.
///
/// `tangents` and `out` hold the vectors back to back, each of length `2N`.
/// The per-unit local Jacobians are evaluated once and reused across all
/// tangents, which is what makes joint state+tangent integration affordable.
pub fn apply_jacobian_into(
    state: &[f64],
    p: &ModelParams,
    c: &CouplingConfig,
    tangents: &[f64],
    k: usize,
    out: &mut [f64],
    ws: &mut VariationalWorkspace,
) {
    let n = c.n_units();
    let dim = 2 * n;
    debug_assert_eq!(tangents.len(), k * dim);
    debug_assert_eq!(out.len(), k * dim);
    ws.local.clear();
    ws.local.reserve(n);
    for i in 0..n {
        let a = local_jacobian(state[2 * i], state[2 * i + 1], p);
        ws.local.push([a[0][0], a[0][1], a[1][0], a[1][1]]);
    }
    for m in 0..k {
        let v = &tangents[m * dim..(m + 1) * dim];
        let o = &mut out[m * dim..(m + 1) * dim];
        for i in 0..n {
            let a = ws.local[i];
            o[2 * i] = a[0] * v[2 * i] + a[1] * v[2 * i + 1];
            o[2 * i + 1] = a[2] * v[2 * i] + a[3] * v[2 * i + 1];
        }
        for es in c.edge_strengths() {
            let (ia, ib) = (2 * es.a, 2 * es.b);
            let dx = v[ib] - v[ia];
            let dy = v[ib + 1] - v[ia + 1];
            o[ia] += es.eps_x * dx;
            o[ib] -= es.eps_x * dx;
            o[ia + 1] += es.eps_y * dy;
            o[ib + 1] -= es.eps_y * dy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_params_match_reference_values() {
        let p = ModelParams::default();
        assert_eq!(p.tau, 0.16);
        assert_eq!(p.capacitance, 1.0);
        assert_eq!(p.e_leak, -80.0);
        assert_eq!(p.g_leak, 8.0);
        assert_eq!(p.e_na, 60.0);
        assert_eq!(p.g_na, 20.0);
        assert_eq!(p.e_k, -90.0);
        assert_eq!(p.g_k, 10.0);
        assert_eq!(p.m_half, -20.0);
        assert_eq!(p.k_m, 15.0);
        assert_eq!(p.n_half, -25.0);
        assert_eq!(p.k_n, 5.0);
        assert_eq!(p.current, 2.0);
        p.validate().unwrap();
    }

    #[test]
    fn activation_midpoint_is_half() {
        assert_eq!(activation(-20.0, -20.0, 15.0).unwrap(), 0.5);
        assert_eq!(activation(-25.0, -25.0, 5.0).unwrap(), 0.5);
    }

    #[test]
    fn activation_matches_direct_formula() {
        // 1 / (1 + exp(-10/15)), frozen from an independent evaluation.
        let v = activation(-10.0, -20.0, 15.0).unwrap();
        assert_relative_eq!(v, 0.660_756_368_765_8172, epsilon = 1e-15);
    }

    #[test]
    fn activation_monotone_and_bounded() {
        let mut prev = 0.0;
        for i in 0..200 {
            let x = -100.0 + i as f64;
            let v = activation(x, -20.0, 15.0).unwrap();
            assert!(v > 0.0 && v < 1.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn activation_rejects_bad_input() {
        assert!(activation(f64::NAN, -20.0, 15.0).is_err());
        assert!(activation(0.0, -20.0, 0.0).is_err());
    }

    #[test]
    fn local_rhs_finite_for_y_outside_unit_interval() {
        let p = ModelParams::default();
        let (dx, dy) = local_rhs(-50.0, 1.7, &p).unwrap();
        assert!(dx.is_finite() && dy.is_finite());
        let (dx, dy) = local_rhs(-50.0, -0.4, &p).unwrap();
        assert!(dx.is_finite() && dy.is_finite());
    }

    #[test]
    fn synchronized_state_has_zero_coupling() {
        let p = ModelParams::default();
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2), (0, 2)], 0.7, 0.3).unwrap();
        let s = vec![-40.0, 0.2, -40.0, 0.2, -40.0, 0.2];
        let d = network_rhs(&s, &p, &c).unwrap();
        let (dx, dy) = local_rhs(-40.0, 0.2, &p).unwrap();
        for i in 0..3 {
            assert_eq!(d[2 * i], dx);
            assert_eq!(d[2 * i + 1], dy);
        }
    }

    #[test]
    fn zero_coupling_equals_uncoupled_stack() {
        let p = ModelParams::default();
        let c = CouplingConfig::new(2, &[(0, 1)], 0.0, 0.0).unwrap();
        let s = vec![-40.0, 0.2, -10.0, 0.6];
        let d = network_rhs(&s, &p, &c).unwrap();
        let (dx1, dy1) = local_rhs(-40.0, 0.2, &p).unwrap();
        let (dx2, dy2) = local_rhs(-10.0, 0.6, &p).unwrap();
        assert_eq!(d, vec![dx1, dy1, dx2, dy2]);
    }

    #[test]
    fn pair_coupling_term_is_state_difference() {
        let p = ModelParams::default();
        let c = CouplingConfig::pair(0.15).unwrap();
        let s = vec![-40.0, 0.2, -10.0, 0.6];
        let d = network_rhs(&s, &p, &c).unwrap();
        let (dx1, dy1) = local_rhs(-40.0, 0.2, &p).unwrap();
        // coupling on unit 1 is 0.15 * (state_2 - state_1), componentwise
        assert_relative_eq!(d[0] - dx1, 0.15 * (-10.0 - (-40.0)), epsilon = 1e-13);
        assert_relative_eq!(d[1] - dy1, 0.15 * (0.6 - 0.2), epsilon = 1e-13);
    }

    #[test]
    fn edge_override_replaces_global_strength() {
        let p = ModelParams::default();
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2)], 0.2, 0.2)
            .unwrap()
            .with_override(1, 2, 0.05)
            .unwrap();
        let s = vec![-40.0, 0.2, -10.0, 0.6, -70.0, 0.1];
        let d = network_rhs(&s, &p, &c).unwrap();
        let (dx2, _) = local_rhs(-10.0, 0.6, &p).unwrap();
        let expected = dx2 + 0.2 * (-40.0 - (-10.0)) + 0.05 * (-70.0 - (-10.0));
        assert_relative_eq!(d[2], expected, epsilon = 1e-13);
    }

    #[test]
    fn override_requires_existing_edge() {
        let c = CouplingConfig::new(3, &[(0, 1)], 0.2, 0.2).unwrap();
        assert!(c.with_override(0, 2, 0.1).is_err());
    }

    #[test]
    fn rejects_self_loop_and_negative_strength() {
        assert!(CouplingConfig::new(2, &[(1, 1)], 0.1, 0.1).is_err());
        assert!(CouplingConfig::new(2, &[(0, 1)], -0.1, 0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = ModelParams::default();
        let c = CouplingConfig::pair(0.1).unwrap();
        assert!(network_rhs(&[0.0; 3], &p, &c).is_err());
        assert!(network_jacobian(&[0.0; 3], &p, &c).is_err());
    }

    #[test]
    fn jacobian_coupling_rows_sum_to_zero() {
        // with local dynamics removed, each row of the coupling part sums to zero
        let p = ModelParams::default();
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2)], 0.4, 0.1).unwrap();
        let c0 = c.clone().with_eps(0.0, 0.0);
        let s = vec![-40.0, 0.2, -10.0, 0.6, -70.0, 0.1];
        let j = network_jacobian(&s, &p, &c).unwrap();
        let j0 = network_jacobian(&s, &p, &c0).unwrap();
        let coupling = j - j0;
        for r in 0..6 {
            let sum: f64 = coupling.row(r).iter().sum();
            assert_relative_eq!(sum, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_uncoupled_has_no_cross_blocks() {
        let p = ModelParams::default();
        let c = CouplingConfig::new(2, &[(0, 1)], 0.0, 0.0).unwrap();
        let s = vec![-40.0, 0.2, -10.0, 0.6];
        let j = network_jacobian(&s, &p, &c).unwrap();
        for r in 0..2 {
            for col in 2..4 {
                assert_eq!(j[(r, col)], 0.0);
                assert_eq!(j[(col, r)], 0.0);
            }
        }
    }

    #[test]
    fn apply_jacobian_matches_matrix_product() {
        let p = ModelParams::default();
        let c = CouplingConfig::new(2, &[(0, 1)], 0.3, 0.07).unwrap();
        let s = vec![-40.0, 0.2, -10.0, 0.6];
        let j = network_jacobian(&s, &p, &c).unwrap();
        let tangents = vec![1.0, -2.0, 0.5, 0.25, 0.0, 1.0, 3.0, -1.0];
        let mut out = vec![0.0; 8];
        let mut ws = VariationalWorkspace::default();
        apply_jacobian_into(&s, &p, &c, &tangents, 2, &mut out, &mut ws);
        for m in 0..2 {
            let v = nalgebra::DVector::from_column_slice(&tangents[m * 4..(m + 1) * 4]);
            let jv = &j * v;
            for i in 0..4 {
                assert_relative_eq!(out[m * 4 + i], jv[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn coupling_json_round_trip_uses_one_based_pairs() {
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2)], 0.15, 0.1)
            .unwrap()
            .with_override(0, 1, 0.02)
            .unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("[1,2]"), "expected 1-based pairs in {json}");
        let back: CouplingConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn model_params_json_rejects_unknown_keys() {
        let r: std::result::Result<ModelParams, _> =
            serde_json::from_str("{\"tau\": 0.16, \"bogus\": 1}");
        assert!(r.is_err());
    }
}
