//! Adaptive embedded Runge-Kutta 5(4) integration (Tsitouras coefficients)
//! with dense output, uniform post-transient sampling and section-crossing
//! location.
//!
//! The driver takes one *accepted* step at a time and keeps the stage
//! derivatives of that step around, so the fourth-order interpolant can be
//! evaluated anywhere inside it. Sampling and event location both run off
//! that interpolant instead of forcing the step size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

// Tsitouras 5(4) tableau for an autonomous field (stage times unused). The
// propagating solution is the 5th-order row (FSAL: its derivative is stage 7
// and next step's stage 1); `BTILDE` is the difference against the embedded
// 4th-order weights.
const A21: f64 = 0.161;
const A31: f64 = -0.008_480_655_492_356_989;
const A32: f64 = 0.335_480_655_492_357;
const A41: f64 = 2.897_153_057_105_493_5;
const A42: f64 = -6.359_448_489_975_075;
const A43: f64 = 4.362_295_432_869_581_5;
const A51: f64 = 5.325_864_828_439_257;
const A52: f64 = -11.748_883_564_062_828;
const A53: f64 = 7.495_539_342_889_836_5;
const A54: f64 = -0.092_495_066_361_755_25;
const A61: f64 = 5.861_455_442_946_42;
const A62: f64 = -12.920_969_317_847_11;
const A63: f64 = 8.159_367_898_576_159;
const A64: f64 = -0.071_584_973_281_401;
const A65: f64 = -0.028_269_050_394_068_383;
const B1: f64 = 0.096_460_766_818_065_23;
const B2: f64 = 0.01;
const B3: f64 = 0.479_889_650_414_499_6;
const B4: f64 = 1.379_008_574_103_742;
const B5: f64 = -3.290_069_515_436_081;
const B6: f64 = 2.324_710_524_099_774;

const BTILDE: [f64; 7] = [
    -0.001_780_011_052_225_771_4,
    -0.000_816_434_459_656_746_9,
    0.007_880_878_010_261_995,
    -0.144_711_007_173_262_9,
    0.582_357_165_452_555_2,
    -0.458_082_105_929_186_97,
    0.015_151_515_151_515_152,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BLOWUP_LIMIT: f64 = 1e8;

/// Error tolerances, time windows and sampling of an integration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial window discarded before any sample is stored.
    pub t_transient: f64,
    /// Total integrated time (including the transient).
    pub t_total: f64,
    /// Spacing of stored post-transient samples.
    pub sample_dt: f64,
    /// Safety cap on accepted+rejected steps.
    pub max_steps: u64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            t_transient: 7000.0,
            t_total: 40000.0,
            sample_dt: 0.05,
            max_steps: 100_000_000,
        }
    }
}

impl IntegrationSettings {
    /// Same tolerances, different time windows.
    pub fn with_windows(mut self, t_transient: f64, t_total: f64) -> Self {
        self.t_transient = t_transient;
        self.t_total = t_total;
        self
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if !(self.t_transient >= 0.0) || !(self.t_total > self.t_transient) {
            return Err(Error::InvalidParameter(
                "need t_total > t_transient >= 0".into(),
            ));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::InvalidParameter("sample_dt must be > 0".into()));
        }
        Ok(())
    }
}

/// Uniformly sampled post-transient trajectory.
///
/// States are stored back to back; `state(k)` is the `k`-th sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory {
            dim,
            times: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.data.extend_from_slice(state);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        if self.is_empty() {
            None
        } else {
            Some(self.state(self.len() - 1))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Component `c` of every sample.
    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.dim).copied()
    }

    /// CSV export with header `t,x1,y1,...,xN,yN` at full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for i in 0..self.dim / 2 {
            write!(w, ",x{},y{}", i + 1, i + 1)?;
        }
        writeln!(w)?;
        for (t, s) in self.iter() {
            write!(w, "{t:.16e}")?;
            for v in s {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Step-by-step adaptive driver around a fixed right-hand side.
///
/// Single-use and single-threaded; run many drivers concurrently on disjoint
/// inputs for parallel work.
pub struct OdeDriver<F> {
    rhs: F,
    dim: usize,
    t: f64,
    y: Vec<f64>,
    t_prev: f64,
    y_prev: Vec<f64>,
    h: f64,
    h_last: f64,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    abs_tol: f64,
    rel_tol: f64,
    err_prev: f64,
    steps: u64,
    max_steps: u64,
    fsal_valid: bool,
}

impl<F: FnMut(&[f64], &mut [f64])> OdeDriver<F> {
    pub fn new(mut rhs: F, t0: f64, y0: &[f64], abs_tol: f64, rel_tol: f64, max_steps: u64) -> Result<Self> {
        let dim = y0.len();
        let mut f0 = vec![0.0; dim];
        rhs(y0, &mut f0);
        if f0.iter().any(|v| !v.is_finite()) || y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state or derivative".into()));
        }
        let h0 = initial_step(y0, &f0, abs_tol, rel_tol);
        let mut k: [Vec<f64>; 7] = Default::default();
        for ki in &mut k {
            *ki = vec![0.0; dim];
        }
        k[0].copy_from_slice(&f0);
        Ok(OdeDriver {
            rhs,
            dim,
            t: t0,
            y: y0.to_vec(),
            t_prev: t0,
            y_prev: y0.to_vec(),
            h: h0,
            h_last: h0,
            k,
            stage: vec![0.0; dim],
            abs_tol,
            rel_tol,
            err_prev: 1.0,
            steps: 0,
            max_steps,
            fsal_valid: true,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    pub fn state_prev(&self) -> &[f64] {
        &self.y_prev
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Derivative at the current state (valid after an accepted step).
    pub fn current_derivative(&self) -> &[f64] {
        &self.k[6]
    }

    /// Replaces the current state in place (the renormalization hook for
    /// tangent-space integration). Invalidates the FSAL derivative and the
    /// dense output of the previous step.
    pub fn set_state(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        self.y.copy_from_slice(y);
        self.y_prev.copy_from_slice(y);
        self.t_prev = self.t;
        self.fsal_valid = false;
    }

    /// One accepted step, possibly retrying internally with smaller trial
    /// steps. `h_cap` limits the step (used to land exactly on an endpoint).
    pub fn step(&mut self, h_cap: Option<f64>) -> Result<()> {
        if !self.fsal_valid {
            let (y, k0) = (&self.y, &mut self.k[0]);
            (self.rhs)(y, k0);
            self.fsal_valid = true;
        } else if self.t != self.t_prev {
            // FSAL: derivative at the accepted state is stage 7 of last step
            let (a, b) = self.k.split_at_mut(6);
            a[0].copy_from_slice(&b[0]);
        }
        loop {
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(Error::MaxStepsExceeded {
                    max_steps: self.max_steps,
                    t: self.t,
                });
            }
            let mut h = self.h;
            if let Some(cap) = h_cap {
                h = h.min(cap);
            }
            if h < f64::EPSILON * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t });
            }
            match self.try_step(h) {
                StepTrial::Accept { err } => {
                    // PI controller (Hairer): err^(-0.7/5) * err_prev^(0.4/5)
                    let fac = if err == 0.0 {
                        FAC_MAX
                    } else {
                        SAFETY * err.powf(-0.14) * self.err_prev.powf(0.08)
                    };
                    let fac = fac.clamp(FAC_MIN, FAC_MAX);
                    self.err_prev = err.max(1e-10);
                    self.h_last = h;
                    self.h = h * fac;
                    return Ok(());
                }
                StepTrial::Reject { err } => {
                    let fac = if err.is_finite() {
                        (SAFETY * err.powf(-0.2)).max(FAC_MIN)
                    } else {
                        FAC_MIN
                    };
                    self.h = h * fac.min(1.0);
                    if self.h < f64::EPSILON * self.t.abs().max(1.0) {
                        return Err(Error::StepSizeUnderflow { t: self.t });
                    }
                }
            }
        }
    }

    fn try_step(&mut self, h: f64) -> StepTrial {
        let dim = self.dim;
        macro_rules! stage {
            ($ki:expr, $($c:expr => $kj:expr),+) => {{
                for i in 0..dim {
                    let mut acc = 0.0;
                    $(acc += $c * self.k[$kj][i];)+
                    self.stage[i] = self.y[i] + h * acc;
                }
                (self.rhs)(&self.stage, &mut self.k[$ki]);
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        // 5th-order solution into `stage`
        for i in 0..dim {
            let acc = B1 * self.k[0][i]
                + B2 * self.k[1][i]
                + B3 * self.k[2][i]
                + B4 * self.k[3][i]
                + B5 * self.k[4][i]
                + B6 * self.k[5][i];
            self.stage[i] = self.y[i] + h * acc;
        }
        if self.stage.iter().any(|v| !v.is_finite()) {
            return StepTrial::Reject { err: f64::INFINITY };
        }
        {
            let (stage, k6) = (&self.stage, &mut self.k[6]);
            (self.rhs)(stage, k6);
        }
        let mut err_sq = 0.0;
        for i in 0..dim {
            let e = h * (BTILDE[0] * self.k[0][i]
                + BTILDE[1] * self.k[1][i]
                + BTILDE[2] * self.k[2][i]
                + BTILDE[3] * self.k[3][i]
                + BTILDE[4] * self.k[4][i]
                + BTILDE[5] * self.k[5][i]
                + BTILDE[6] * self.k[6][i]);
            let scale = self.abs_tol + self.rel_tol * self.y[i].abs().max(self.stage[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();
        if !err.is_finite() || err > 1.0 {
            return StepTrial::Reject { err };
        }
        self.t_prev = self.t;
        std::mem::swap(&mut self.y_prev, &mut self.y);
        self.y.copy_from_slice(&self.stage);
        self.t += h;
        StepTrial::Accept { err }
    }

    /// Interpolant evaluation inside the last accepted step.
    pub fn dense_into(&self, t: f64, out: &mut [f64]) {
        let h = self.t - self.t_prev;
        if h == 0.0 {
            out.copy_from_slice(&self.y);
            return;
        }
        let theta = (t - self.t_prev) / h;
        let b = interp_weights(theta);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for (bj, kj) in b.iter().zip(self.k.iter()) {
                acc += bj * kj[i];
            }
            out[i] = self.y_prev[i] + h * acc;
        }
    }

    /// Advance until `t_end`, landing on it exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            self.check_blowup()?;
            self.step(Some(t_end - self.t))?;
        }
        Ok(())
    }

    fn check_blowup(&self) -> Result<()> {
        if self.y.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
            return Err(Error::Divergence {
                t: self.t,
                last_state: self.y.clone(),
            });
        }
        Ok(())
    }
}

enum StepTrial {
    Accept { err: f64 },
    Reject { err: f64 },
}

/// Fourth-order interpolation weights for the seven stages at fraction
/// `theta` of the step.
fn interp_weights(theta: f64) -> [f64; 7] {
    let t2 = theta * theta;
    [
        -1.053_088_497_729_021_6
            * theta
            * (theta - 1.329_989_018_975_141_2)
            * (t2 - 1.436_402_854_171_635_1 * theta + 0.713_981_691_707_420_9),
        0.1017 * t2 * (t2 - 2.196_656_833_824_975_4 * theta + 1.294_985_250_737_463_1),
        2.490_627_285_651_252_8 * t2 * (t2 - 2.385_356_454_720_616_6 * theta + 1.578_034_682_080_924_9),
        -16.548_102_889_244_903
            * (theta - 1.217_129_272_955_332_4)
            * (theta - 0.616_204_060_378_000_9)
            * t2,
        47.379_521_962_819_28
            * (theta - 1.203_071_208_372_362_6)
            * (theta - 0.658_047_292_653_547_4)
            * t2,
        -34.870_657_861_496_61 * (theta - 1.2) * (theta - 2.0 / 3.0) * t2,
        2.5 * (theta - 1.0) * (theta - 0.6) * t2,
    ]
}

fn initial_step(y0: &[f64], f0: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    // standard heuristic: h ~ 0.01 * |y|_scaled / |f|_scaled, conservatively clamped
    let n = y0.len() as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (y, f) in y0.iter().zip(f0) {
        let scale = abs_tol + rel_tol * y.abs();
        d0 += (y / scale) * (y / scale);
        d1 += (f / scale) * (f / scale);
    }
    let d0 = (d0 / n).sqrt();
    let d1 = (d1 / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(1e-10, 0.1)
}

/// Integrates the vector field from `s0`, discarding the transient window
/// and returning samples spaced by `sample_dt`.
pub fn integrate<F>(mut rhs: F, s0: &[f64], cfg: &IntegrationSettings) -> Result<Trajectory>
where
    F: FnMut(&[f64], &mut [f64]),
{
    cfg.validate()?;
    let dim = s0.len();
    let mut driver = OdeDriver::new(&mut rhs, 0.0, s0, cfg.abs_tol, cfg.rel_tol, cfg.max_steps)?;
    let mut traj = Trajectory::new(dim);
    let mut sample = vec![0.0; dim];
    let mut next_idx: u64 = 0;
    let next_time = |k: u64| cfg.t_transient + k as f64 * cfg.sample_dt;
    while driver.t() < cfg.t_total {
        driver.check_blowup()?;
        driver.step(Some(cfg.t_total - driver.t()))?;
        while next_time(next_idx) <= driver.t() && next_time(next_idx) <= cfg.t_total {
            driver.dense_into(next_time(next_idx), &mut sample);
            traj.push(next_time(next_idx), &sample);
            next_idx += 1;
        }
    }
    driver.check_blowup()?;
    Ok(traj)
}

/// Crossing direction filter for section events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    Upward,
    Downward,
    Both,
}

impl CrossingDirection {
    fn matches(self, before: f64, after: f64) -> bool {
        match self {
            CrossingDirection::Upward => before < 0.0 && after >= 0.0,
            CrossingDirection::Downward => before > 0.0 && after <= 0.0,
            CrossingDirection::Both => (before < 0.0) != (after < 0.0),
        }
    }
}

/// Integrates from `s0` and locates all post-transient sign changes of the
/// section function, refined on the dense output.
pub fn locate_crossings<F, S>(
    mut rhs: F,
    s0: &[f64],
    cfg: &IntegrationSettings,
    section: S,
    direction: CrossingDirection,
) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(&[f64], &mut [f64]),
    S: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let dim = s0.len();
    let mut driver = OdeDriver::new(&mut rhs, 0.0, s0, cfg.abs_tol, cfg.rel_tol, cfg.max_steps)?;
    let mut events = Vec::new();
    let mut buf = vec![0.0; dim];
    let mut s_prev = section(s0);
    while driver.t() < cfg.t_total {
        driver.check_blowup()?;
        driver.step(Some(cfg.t_total - driver.t()))?;
        let s_new = section(driver.state());
        if direction.matches(s_prev, s_new) && driver.t() >= cfg.t_transient {
            let (t_c, state_c) = refine_crossing(&driver, &section, s_prev, s_new, &mut buf);
            events.push((t_c, state_c));
        }
        s_prev = s_new;
    }
    Ok(events)
}

/// Bisection on the dense output of the bracketing step; the returned time
/// always stays inside the step.
fn refine_crossing<F, S>(
    driver: &OdeDriver<F>,
    section: &S,
    s_lo: f64,
    s_hi: f64,
    buf: &mut [f64],
) -> (f64, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]),
    S: Fn(&[f64]) -> f64,
{
    let mut a = driver.t_prev();
    let mut b = driver.t();
    let target = 1e-9 * s_lo.abs().max(s_hi.abs()).max(1e-30);
    let mut sa = s_lo;
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        driver.dense_into(mid, buf);
        let sm = section(buf);
        if sm.abs() < target || (b - a) < f64::EPSILON * b.abs().max(1.0) {
            return (mid, buf.to_vec());
        }
        if (sa < 0.0) == (sm < 0.0) {
            a = mid;
            sa = sm;
        } else {
            b = mid;
        }
    }
    let mid = 0.5 * (a + b);
    driver.dense_into(mid, buf);
    (mid, buf.to_vec())
}

/// Sign changes of a section function between consecutive stored samples,
/// with linearly interpolated crossing times. Good enough for counting and
/// period statistics; use [`locate_crossings`] when high accuracy matters.
pub fn crossings_in_trajectory<S>(
    traj: &Trajectory,
    section: S,
    direction: CrossingDirection,
) -> Vec<(f64, usize)>
where
    S: Fn(&[f64]) -> f64,
{
    let mut out = Vec::new();
    if traj.len() < 2 {
        return out;
    }
    let mut s_prev = section(traj.state(0));
    for k in 1..traj.len() {
        let s_new = section(traj.state(k));
        if direction.matches(s_prev, s_new) {
            let t0 = traj.times()[k - 1];
            let t1 = traj.times()[k];
            let frac = if s_new != s_prev { s_prev / (s_prev - s_new) } else { 0.5 };
            out.push((t0 + frac * (t1 - t0), k - 1));
        }
        s_prev = s_new;
    }
    out
}

/// Fixed-step integration with the same stage kernel, for convergence
/// studies. Returns the endpoint state.
pub fn integrate_fixed_step<F>(mut rhs: F, y0: &[f64], t_span: f64, n_steps: usize) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = y0.len();
    let h = t_span / n_steps as f64;
    let mut y = y0.to_vec();
    let mut k: [Vec<f64>; 7] = Default::default();
    for ki in &mut k {
        *ki = vec![0.0; dim];
    }
    let mut stage = vec![0.0; dim];
    for _ in 0..n_steps {
        rhs(&y, &mut k[0]);
        let a_rows: [&[f64]; 5] = [
            &[A21],
            &[A31, A32],
            &[A41, A42, A43],
            &[A51, A52, A53, A54],
            &[A61, A62, A63, A64, A65],
        ];
        for (s, row) in a_rows.iter().enumerate() {
            for i in 0..dim {
                let acc: f64 = row.iter().enumerate().map(|(j, a)| a * k[j][i]).sum();
                stage[i] = y[i] + h * acc;
            }
            rhs(&stage, &mut k[s + 1]);
        }
        for i in 0..dim {
            let acc = B1 * k[0][i] + B2 * k[1][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i]
                + B6 * k[5][i];
            y[i] += h * acc;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn decay(y: &[f64], out: &mut [f64]) {
        out[0] = -y[0];
    }

    fn harmonic(y: &[f64], out: &mut [f64]) {
        out[0] = y[1];
        out[1] = -y[0];
    }

    #[test]
    fn exponential_decay_endpoint() {
        let mut d = OdeDriver::new(decay, 0.0, &[1.0], 1e-9, 1e-9, 1_000_000).unwrap();
        d.advance_to(1.0).unwrap();
        assert_relative_eq!(d.state()[0], (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(d.t(), 1.0);
    }

    #[test]
    fn harmonic_energy_drift_small() {
        let cfg = IntegrationSettings {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            t_transient: 0.0,
            t_total: 100.0 * std::f64::consts::TAU,
            sample_dt: 1.0,
            max_steps: 10_000_000,
        };
        let traj = integrate(harmonic, &[1.0, 0.0], &cfg).unwrap();
        for (_, s) in traj.iter() {
            let energy = s[0] * s[0] + s[1] * s[1];
            assert!((energy - 1.0).abs() < 1e-6, "energy drift {energy}");
        }
    }

    #[test]
    fn tolerance_tightening_reduces_error_consistently() {
        let reference = {
            let mut d = OdeDriver::new(harmonic, 0.0, &[1.0, 0.0], 1e-12, 1e-12, 10_000_000).unwrap();
            d.advance_to(20.0).unwrap();
            d.state().to_vec()
        };
        let mut errs = Vec::new();
        for tol in [1e-6, 1e-7] {
            let mut d = OdeDriver::new(harmonic, 0.0, &[1.0, 0.0], tol, tol, 10_000_000).unwrap();
            d.advance_to(20.0).unwrap();
            let e = (d.state()[0] - reference[0]).hypot(d.state()[1] - reference[1]);
            errs.push(e);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (2.0..80.0).contains(&ratio),
            "error ratio {ratio} not consistent with 5th-order step control (errs {errs:?})"
        );
    }

    #[test]
    fn fixed_step_order_is_five() {
        let y0 = [1.0, 0.0];
        let exact = [20.0f64.cos(), -(20.0f64.sin())];
        let mut errors = Vec::new();
        let steps = [200usize, 400, 800, 1600];
        for &n in &steps {
            let y = integrate_fixed_step(harmonic, &y0, 20.0, n);
            errors.push(((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt());
        }
        // log-log slope between successive halvings
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(
                (4.7..5.3).contains(&slope),
                "observed order {slope}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        // compare midpoint interpolation against a tight integration
        let mut d = OdeDriver::new(harmonic, 0.0, &[1.0, 0.0], 1e-6, 1e-6, 1_000_000).unwrap();
        d.step(None).unwrap();
        let tm = 0.5 * (d.t_prev() + d.t());
        let mut interp = [0.0; 2];
        d.dense_into(tm, &mut interp);
        assert_relative_eq!(interp[0], tm.cos(), epsilon = 1e-7);
        assert_relative_eq!(interp[1], -tm.sin(), epsilon = 1e-7);
    }

    #[test]
    fn sampling_grid_is_uniform_and_clipped() {
        let cfg = IntegrationSettings {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            t_transient: 1.0,
            t_total: 2.0,
            sample_dt: 0.25,
            max_steps: 1_000_000,
        };
        let traj = integrate(decay, &[1.0], &cfg).unwrap();
        let expected: Vec<f64> = (0..5).map(|k| 1.0 + 0.25 * k as f64).collect();
        assert_eq!(traj.times(), expected.as_slice());
        for (t, s) in traj.iter() {
            assert_relative_eq!(s[0], (-t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let cfg = IntegrationSettings {
            t_transient: 0.0,
            t_total: 50.0,
            sample_dt: 0.05,
            ..Default::default()
        };
        let a = integrate(harmonic, &[1.0, 0.0], &cfg).unwrap();
        let b = integrate(harmonic, &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blowup_is_reported_not_panicked() {
        let cfg = IntegrationSettings {
            t_transient: 0.0,
            t_total: 5.0,
            sample_dt: 0.01,
            ..Default::default()
        };
        // finite-time blowup at t = 1
        let r = integrate(|y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0], &[1.0], &cfg);
        match r {
            Err(Error::Divergence { t, .. }) => assert!(t < 1.5),
            Err(Error::StepSizeUnderflow { t }) => assert!(t < 1.5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn no_crossings_on_constant_trajectory() {
        let cfg = IntegrationSettings {
            t_transient: 0.0,
            t_total: 10.0,
            sample_dt: 0.1,
            ..Default::default()
        };
        let events = locate_crossings(
            |_y: &[f64], out: &mut [f64]| out[0] = 0.0,
            &[-1.0],
            &cfg,
            |s| s[0] - 0.5,
            CrossingDirection::Both,
        )
        .unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn sine_upward_crossings_at_multiples_of_tau() {
        let cfg = IntegrationSettings {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            t_transient: 0.0,
            t_total: 25.0,
            sample_dt: 0.1,
            max_steps: 10_000_000,
        };
        // y = sin(t): crossings of zero moving upward at t = 2*pi*k
        let events = locate_crossings(
            harmonic,
            &[0.0, 1.0],
            &cfg,
            |s| s[0],
            CrossingDirection::Upward,
        )
        .unwrap();
        assert_eq!(events.len(), 3);
        for (k, (t, state)) in events.iter().enumerate() {
            assert_relative_eq!(*t, (k + 1) as f64 * std::f64::consts::TAU, epsilon = 1e-8);
            assert!(state[0].abs() < 1e-8);
        }
    }

    #[test]
    fn crossing_time_stays_inside_bracketing_step() {
        let mut d = OdeDriver::new(harmonic, 0.0, &[0.0, 1.0], 1e-9, 1e-9, 1_000_000).unwrap();
        let mut buf = [0.0; 2];
        let mut s_prev = 0.0;
        let mut checked = false;
        while d.t() < 7.0 {
            d.step(None).unwrap();
            let s_new = d.state()[0];
            if CrossingDirection::Upward.matches(s_prev, s_new) {
                let (tc, _) = refine_crossing(&d, &|s: &[f64]| s[0], s_prev, s_new, &mut buf);
                assert!(tc >= d.t_prev() && tc <= d.t());
                checked = true;
            }
            s_prev = s_new;
        }
        assert!(checked);
    }

    #[test]
    fn trajectory_csv_has_header_and_full_precision() {
        let mut traj = Trajectory::new(2);
        traj.push(0.0, &[1.0 / 3.0, 2.0 / 3.0]);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,y1");
        let row = lines.next().unwrap();
        assert!(row.contains("3.3333333333333331e-1"), "row was {row}");
    }
}
