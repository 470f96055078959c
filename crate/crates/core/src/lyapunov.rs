//! Lyapunov spectra via joint state/tangent integration with repeated QR
//! reorthonormalization, and the spectrum-based dynamical classification of
//! attractors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::attractors::FeatureVector;
use crate::integrate::OdeDriver;
use crate::model::{
    apply_jacobian_into, local_jacobian, network_rhs_into, CouplingConfig, ModelParams,
    VariationalWorkspace,
};
use crate::{Error, Result};

/// Exponents within this band of zero count as neutral directions (1/time).
pub const ZERO_TOL: f64 = 1e-3;
/// Oscillation amplitudes below this are treated as a steady state (mV).
pub const AMPLITUDE_FLOOR: f64 = 1.0;
/// Flag the spectrum as unconverged when the half-window and full-window
/// estimates differ by more than this.
const CONVERGENCE_GAP: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSettings {
    /// Time between orthonormalizations.
    pub renorm_interval: f64,
    /// Averaging window after the settle time.
    pub t_average: f64,
    /// Extra integration before averaging starts (zero when the starting
    /// state is already on the attractor).
    pub t_settle: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: u64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings {
            renorm_interval: 1.0,
            t_average: 20000.0,
            t_settle: 0.0,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_steps: 100_000_000,
        }
    }
}

impl LyapunovSettings {
    pub fn with_window(mut self, t_average: f64) -> Self {
        self.t_average = t_average;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.renorm_interval > 0.0) || !(self.t_average > 0.0) || !(self.t_settle >= 0.0) {
            return Err(Error::InvalidParameter(
                "lyapunov windows must be positive".into(),
            ));
        }
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// Time-averaged stretching rates along an attractor, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    pub renorm_interval: f64,
    pub t_average: f64,
    /// Largest per-exponent difference between the full-window and
    /// second-half-window estimates.
    pub convergence_gap: f64,
    pub converged: bool,
    /// Time average of the Jacobian trace over the same window (equals the
    /// sum of all `2N` exponents when the full spectrum is requested).
    pub trace_average: f64,
}

/// Dynamical class of an attractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicalClass {
    Equilibrium,
    Periodic,
    Quasiperiodic,
    Chaotic,
    Unclassified,
}

impl std::fmt::Display for DynamicalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DynamicalClass::Equilibrium => "equilibrium",
            DynamicalClass::Periodic => "periodic",
            DynamicalClass::Quasiperiodic => "quasiperiodic",
            DynamicalClass::Chaotic => "chaotic",
            DynamicalClass::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

/// Computes the leading `k` Lyapunov exponents from an on-attractor state.
///
/// The state and `k` tangent vectors are integrated jointly (tangents under
/// the analytic Jacobian), orthonormalized every `renorm_interval`, and the
/// exponents are the time-averaged log stretch factors. One extra quadrature
/// variable accumulates the Jacobian trace so the divergence identity
/// `sum(all 2N exponents) = <trace J>` can be checked.
pub fn spectrum(
    s0: &[f64],
    k: usize,
    p: &ModelParams,
    c: &CouplingConfig,
    cfg: &LyapunovSettings,
) -> Result<LyapunovSpectrum> {
    cfg.validate()?;
    let dim = c.dim();
    if s0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: s0.len(),
        });
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidParameter(format!(
            "tangent count must be in 1..={dim}, got {k}"
        )));
    }

    let mut start = s0.to_vec();
    if cfg.t_settle > 0.0 {
        let mut driver = OdeDriver::new(
            |y: &[f64], out: &mut [f64]| network_rhs_into(y, p, c, out),
            0.0,
            &start,
            cfg.abs_tol,
            cfg.rel_tol,
            cfg.max_steps,
        )?;
        driver.advance_to(cfg.t_settle)?;
        start = driver.state().to_vec();
    }

    // joint vector: state | k tangents | trace integral
    let joint_dim = dim * (k + 1) + 1;
    let mut joint = vec![0.0; joint_dim];
    joint[..dim].copy_from_slice(&start);
    for m in 0..k {
        joint[dim + m * dim + m] = 1.0;
    }

    let mut ws = VariationalWorkspace::default();
    let n_units = c.n_units();
    let coupling_trace: f64 = c
        .edge_strengths()
        .iter()
        .map(|es| -2.0 * (es.eps_x + es.eps_y))
        .sum();
    let rhs = move |y: &[f64], out: &mut [f64]| {
        let state = &y[..dim];
        let tangents = &y[dim..dim + k * dim];
        network_rhs_into(state, p, c, &mut out[..dim]);
        apply_jacobian_into(state, p, c, tangents, k, &mut out[dim..dim + k * dim], &mut ws);
        let mut tr = coupling_trace;
        for i in 0..n_units {
            let a = local_jacobian(state[2 * i], state[2 * i + 1], p);
            tr += a[0][0] + a[1][1];
        }
        out[dim + k * dim] = tr;
    };

    let mut driver = OdeDriver::new(rhs, 0.0, &joint, cfg.abs_tol, cfg.rel_tol, cfg.max_steps)?;
    let mut sums = vec![0.0; k];
    let mut half: Option<(Vec<f64>, f64)> = None;
    let mut logs = vec![0.0; k];
    let mut buffer = joint.clone();
    let n_renorms = (cfg.t_average / cfg.renorm_interval).ceil() as usize;
    for m in 1..=n_renorms {
        let t_m = (m as f64 * cfg.renorm_interval).min(cfg.t_average);
        driver.advance_to(t_m)?;
        buffer.copy_from_slice(driver.state());
        orthonormalize(&mut buffer[dim..dim + k * dim], dim, k, &mut logs);
        for (s, l) in sums.iter_mut().zip(&logs) {
            *s += l;
        }
        driver.set_state(&buffer);
        if half.is_none() && t_m >= 0.5 * cfg.t_average {
            half = Some((sums.clone(), t_m));
        }
    }
    let trace_average = driver.state()[dim + k * dim] / cfg.t_average;

    let full: Vec<f64> = sums.iter().map(|s| s / cfg.t_average).collect();
    let gap = match &half {
        Some((sums_half, t_half)) if *t_half < cfg.t_average => {
            let dt = cfg.t_average - t_half;
            sums.iter()
                .zip(sums_half)
                .zip(&full)
                .map(|((s, sh), f)| (((s - sh) / dt) - f).abs())
                .fold(0.0f64, f64::max)
        }
        _ => f64::INFINITY,
    };

    let mut exponents = full;
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(LyapunovSpectrum {
        exponents,
        renorm_interval: cfg.renorm_interval,
        t_average: cfg.t_average,
        convergence_gap: gap,
        converged: gap <= CONVERGENCE_GAP,
        trace_average,
    })
}

fn orthonormalize(tangents: &mut [f64], dim: usize, k: usize, log_norms: &mut [f64]) {
    if k <= 4 {
        // modified Gram-Schmidt
        for j in 0..k {
            let (done, rest) = tangents.split_at_mut(j * dim);
            let vj = &mut rest[..dim];
            for m in 0..j {
                let q = &done[m * dim..(m + 1) * dim];
                let dot: f64 = q.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
                for (vi, qi) in vj.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
            let norm = vj.iter().map(|v| v * v).sum::<f64>().sqrt();
            log_norms[j] = norm.ln();
            let inv = 1.0 / norm;
            for v in vj.iter_mut() {
                *v *= inv;
            }
        }
    } else {
        let mat = DMatrix::from_iterator(dim, k, tangents.iter().copied());
        let qr = mat.qr();
        let q = qr.q();
        let r = qr.r();
        for j in 0..k {
            let rjj = r[(j, j)];
            log_norms[j] = rjj.abs().ln();
            let sign = if rjj < 0.0 { -1.0 } else { 1.0 };
            for i in 0..dim {
                tangents[j * dim + i] = sign * q[(i, j)];
            }
        }
    }
}

/// Classification rule on a spectrum plus trajectory features.
///
/// Sub-floor amplitudes are an equilibrium regardless of the spectrum; an
/// unconverged spectrum stays unclassified; otherwise the sign of the
/// leading exponent and the number of neutral directions decide.
pub fn classify_dynamics(spec: &LyapunovSpectrum, features: &FeatureVector) -> DynamicalClass {
    let max_amp = features
        .per_unit_amplitude
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    if max_amp < AMPLITUDE_FLOOR {
        return DynamicalClass::Equilibrium;
    }
    if !spec.converged {
        return DynamicalClass::Unclassified;
    }
    if spec.exponents[0] > ZERO_TOL {
        return DynamicalClass::Chaotic;
    }
    let zeros = spec
        .exponents
        .iter()
        .filter(|l| l.abs() <= ZERO_TOL)
        .count();
    match zeros {
        1 => DynamicalClass::Periodic,
        2 => DynamicalClass::Quasiperiodic,
        _ => DynamicalClass::Unclassified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::refine;
    use approx::assert_relative_eq;

    fn synthetic_spectrum(exponents: &[f64]) -> LyapunovSpectrum {
        LyapunovSpectrum {
            exponents: exponents.to_vec(),
            renorm_interval: 1.0,
            t_average: 1000.0,
            convergence_gap: 1e-5,
            converged: true,
            trace_average: exponents.iter().sum(),
        }
    }

    fn features_with_amplitude(amp: f64) -> FeatureVector {
        FeatureVector {
            mean_pairwise_distance: 0.0,
            per_unit_amplitude: vec![amp],
            per_unit_frequency: vec![0.0],
            per_unit_mean: vec![0.0, 0.0],
        }
    }

    #[test]
    fn equilibrium_spectrum_matches_jacobian_real_parts() {
        let p = ModelParams::default();
        let c = CouplingConfig::single_unit();
        let node = refine(&[-64.0, 0.0005], &p, &c).unwrap();
        let cfg = LyapunovSettings::default().with_window(50.0);
        let spec = spectrum(&node.state, 2, &p, &c, &cfg).unwrap();
        assert!(spec.converged);
        // frozen eigenvalues of the rest state Jacobian
        assert_relative_eq!(spec.exponents[0], -1.328793, epsilon = 1e-3);
        assert_relative_eq!(spec.exponents[1], -6.226861, epsilon = 1e-3);
        // divergence identity is exact here
        let sum: f64 = spec.exponents.iter().sum();
        assert_relative_eq!(sum, spec.trace_average, epsilon = 1e-6);
    }

    #[test]
    fn qr_path_agrees_with_gram_schmidt_path() {
        // k = 5 on a 3-unit chain exercises the full-QR branch
        let p = ModelParams::default();
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2)], 0.05, 0.05).unwrap();
        let node = refine(&[-64.0, 0.0005, -64.0, 0.0005, -64.0, 0.0005], &p, &c).unwrap();
        let cfg = LyapunovSettings::default().with_window(30.0);
        let spec5 = spectrum(&node.state, 5, &p, &c, &cfg).unwrap();
        let spec4 = spectrum(&node.state, 4, &p, &c, &cfg).unwrap();
        for (a, b) in spec5.exponents.iter().zip(&spec4.exponents) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn classify_equilibrium_by_amplitude_floor() {
        let spec = synthetic_spectrum(&[-0.5, -1.0]);
        assert_eq!(
            classify_dynamics(&spec, &features_with_amplitude(0.2)),
            DynamicalClass::Equilibrium
        );
    }

    #[test]
    fn classify_periodic_quasiperiodic_chaotic() {
        let periodic = synthetic_spectrum(&[0.0, -0.2, -0.5, -1.0]);
        assert_eq!(
            classify_dynamics(&periodic, &features_with_amplitude(40.0)),
            DynamicalClass::Periodic
        );
        let torus = synthetic_spectrum(&[0.0004, -0.0002, -0.5, -1.0]);
        assert_eq!(
            classify_dynamics(&torus, &features_with_amplitude(40.0)),
            DynamicalClass::Quasiperiodic
        );
        let chaotic = synthetic_spectrum(&[0.05, 0.0, -0.5, -1.0]);
        assert_eq!(
            classify_dynamics(&chaotic, &features_with_amplitude(40.0)),
            DynamicalClass::Chaotic
        );
    }

    #[test]
    fn unconverged_spectrum_is_unclassified() {
        let mut spec = synthetic_spectrum(&[0.0, -0.2]);
        spec.converged = false;
        assert_eq!(
            classify_dynamics(&spec, &features_with_amplitude(40.0)),
            DynamicalClass::Unclassified
        );
    }

    #[test]
    fn rejects_bad_tangent_count() {
        let p = ModelParams::default();
        let c = CouplingConfig::single_unit();
        let cfg = LyapunovSettings::default().with_window(1.0);
        assert!(spectrum(&[-64.0, 0.0005], 0, &p, &c, &cfg).is_err());
        assert!(spectrum(&[-64.0, 0.0005], 3, &p, &c, &cfg).is_err());
    }
}
