//! Newton refinement, exhaustive enumeration and eigenvalue classification of
//! network equilibria, plus one-parameter equilibrium continuation with fold
//! and Hopf detection.
//!
//! Enumeration seeds Newton from every combination of the uncoupled unit's
//! fixed points, which finds all equilibria of weakly coupled networks (the
//! coupled equilibria are continuations of those product states).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{network_jacobian, network_rhs_into, CouplingConfig, ModelParams, NetworkState};
use crate::{Error, Result};

/// Newton target residual (2-norm of the vector field).
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 50;
/// Smallest admissible damping factor (2^-20).
const DAMPING_FLOOR: f64 = 1.0 / 1_048_576.0;
/// Roots closer than this in max-norm are considered the same equilibrium.
const DEDUP_DISTANCE: f64 = 1e-6;
/// Eigenvalue real parts below this magnitude flag bifurcation proximity.
const MARGINAL_TOL: f64 = 1e-9;

/// A refined equilibrium with its spectrum and classification.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub state: NetworkState,
    /// Jacobian eigenvalues sorted by real part, descending.
    pub eigenvalues: Vec<Complex64>,
    /// Per-unit compound label such as `node-node` or `saddle-node`
    /// (single-unit systems get the plain signature name).
    pub class_label: String,
    /// Achieved `||rhs||_2`.
    pub residual_norm: f64,
}

impl Equilibrium {
    pub fn n_units(&self) -> usize {
        self.state.len() / 2
    }

    /// Unit `i`'s coordinates in its own subspace.
    pub fn unit(&self, i: usize) -> (f64, f64) {
        (self.state[2 * i], self.state[2 * i + 1])
    }

    /// True if every eigenvalue has negative real part.
    pub fn is_stable(&self) -> bool {
        self.eigenvalues.iter().all(|e| e.re < 0.0)
    }

    /// Counts of eigenvalues with positive/negative real part.
    pub fn signature(&self) -> (usize, usize) {
        let pos = self.eigenvalues.iter().filter(|e| e.re > 0.0).count();
        (pos, self.eigenvalues.len() - pos)
    }
}

fn residual_norm(state: &[f64], p: &ModelParams, c: &CouplingConfig) -> f64 {
    let mut rhs = vec![0.0; state.len()];
    network_rhs_into(state, p, c, &mut rhs);
    rhs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Damped Newton iteration on the network vector field with the analytic
/// Jacobian. Backtracking halves the step while the residual grows.
pub fn refine(guess: &[f64], p: &ModelParams, c: &CouplingConfig) -> Result<Equilibrium> {
    if guess.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: guess.len(),
        });
    }
    let dim = c.dim();
    let mut x = guess.to_vec();
    let mut rhs = vec![0.0; dim];
    network_rhs_into(&x, p, c, &mut rhs);
    let mut res = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..NEWTON_MAX_ITERS {
        if res < NEWTON_TOL {
            return finish_refined(x, res, p, c);
        }
        let jac = network_jacobian(&x, p, c)?;
        let lu = jac.lu();
        let b = DVector::from_iterator(dim, rhs.iter().map(|v| -v));
        let delta = match lu.solve(&b) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Err(Error::SingularJacobian),
        };
        // backtracking line search on the residual norm
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= DAMPING_FLOOR {
            let trial: Vec<f64> = x
                .iter()
                .zip(delta.iter())
                .map(|(xi, di)| xi + lambda * di)
                .collect();
            let trial_res = residual_norm(&trial, p, c);
            if trial_res < res || trial_res < NEWTON_TOL {
                x = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonNonConvergence {
                residual: res,
                iterations: NEWTON_MAX_ITERS,
                last_iterate: x,
            });
        }
        network_rhs_into(&x, p, c, &mut rhs);
    }
    if res < NEWTON_TOL {
        return finish_refined(x, res, p, c);
    }
    Err(Error::NewtonNonConvergence {
        residual: res,
        iterations: NEWTON_MAX_ITERS,
        last_iterate: x,
    })
}

fn finish_refined(state: Vec<f64>, res: f64, p: &ModelParams, c: &CouplingConfig) -> Result<Equilibrium> {
    let eigenvalues = sorted_eigenvalues(&network_jacobian(&state, p, c)?);
    // single-unit labels come from the signature alone, which also keeps
    // `uncoupled_fixed_points` (itself built on single-unit refines) acyclic
    let uncoupled = if c.n_units() == 1 {
        Vec::new()
    } else {
        uncoupled_fixed_points(p)?
    };
    let label = classify_from_parts(&state, &eigenvalues, &uncoupled);
    Ok(Equilibrium {
        state,
        eigenvalues,
        class_label: label,
        residual_norm: res,
    })
}

pub(crate) fn sorted_eigenvalues(jac: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = jac
        .complex_eigenvalues()
        .iter()
        .map(|e| Complex64::new(e.re, e.im))
        .collect();
    ev.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    ev
}

/// A fixed point of the single uncoupled unit with its signature name.
#[derive(Debug, Clone)]
pub struct UncoupledPoint {
    pub x: f64,
    pub y: f64,
    pub name: &'static str,
}

/// All fixed points of the single uncoupled unit, sorted by `x`.
///
/// Roots are bracketed on a fine scan of the voltage axis (the gating
/// equation is solved exactly by `y = n_inf(x)`) and then Newton-refined in
/// the plane.
pub fn uncoupled_fixed_points(p: &ModelParams) -> Result<Vec<UncoupledPoint>> {
    let single = CouplingConfig::single_unit();
    let reduced = |x: f64| -> f64 {
        let y = crate::model::activation(x, p.n_half, p.k_n).unwrap_or(f64::NAN);
        crate::model::local_rhs_unchecked(x, y, p).0
    };
    let (lo, hi, steps) = (-100.0, 40.0, 14_000);
    let dx = (hi - lo) / steps as f64;
    let mut points = Vec::new();
    let mut prev = reduced(lo);
    for k in 1..=steps {
        let x = lo + k as f64 * dx;
        let value = reduced(x);
        if prev == 0.0 || (prev < 0.0) != (value < 0.0) {
            let x_guess = x - 0.5 * dx;
            let y_guess = crate::model::activation(x_guess, p.n_half, p.k_n)?;
            if let Ok(eq) = refine(&[x_guess, y_guess], p, &single) {
                points.push(eq);
            }
        }
        prev = value;
    }
    points.sort_by(|a, b| a.state[0].partial_cmp(&b.state[0]).unwrap());
    points.dedup_by(|a, b| (a.state[0] - b.state[0]).abs() < DEDUP_DISTANCE);
    Ok(points
        .into_iter()
        .map(|eq| UncoupledPoint {
            x: eq.state[0],
            y: eq.state[1],
            name: signature_name(&eq.eigenvalues),
        })
        .collect())
}

fn signature_name(eigenvalues: &[Complex64]) -> &'static str {
    if eigenvalues.iter().any(|e| e.re.abs() < MARGINAL_TOL) {
        return "marginal";
    }
    let complex = eigenvalues.iter().any(|e| e.im.abs() > MARGINAL_TOL);
    let n_pos = eigenvalues.iter().filter(|e| e.re > 0.0).count();
    match (complex, n_pos) {
        (true, 0) => "stable-focus",
        (true, _) => "focus",
        (false, 0) => "node",
        (false, n) if n == eigenvalues.len() => "source",
        (false, _) => "saddle",
    }
}

/// Compound class label from the eigenvalue signature and the per-unit
/// nearest uncoupled fixed point.
pub fn classify(eq: &Equilibrium, p: &ModelParams) -> Result<String> {
    let uncoupled = uncoupled_fixed_points(p)?;
    Ok(classify_from_parts(&eq.state, &eq.eigenvalues, &uncoupled))
}

fn classify_from_parts(
    state: &[f64],
    eigenvalues: &[Complex64],
    uncoupled: &[UncoupledPoint],
) -> String {
    if eigenvalues.iter().any(|e| e.re.abs() < MARGINAL_TOL) {
        return "marginal".to_string();
    }
    let n_units = state.len() / 2;
    if n_units == 1 || uncoupled.is_empty() {
        return signature_name(eigenvalues).to_string();
    }
    let mut parts = Vec::with_capacity(n_units);
    for i in 0..n_units {
        let (x, y) = (state[2 * i], state[2 * i + 1]);
        let nearest = uncoupled
            .iter()
            .min_by(|a, b| {
                let da = (a.x - x).powi(2) + (a.y - y).powi(2);
                let db = (b.x - x).powi(2) + (b.y - y).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .expect("nonempty");
        parts.push(nearest.name);
    }
    parts.join("-")
}

/// Seeds Newton from every combination of uncoupled fixed points and returns
/// the distinct refined equilibria. Guarded to `N <= 12` (the seed count is
/// `3^N` in the excitable regime).
pub fn enumerate_equilibria(p: &ModelParams, c: &CouplingConfig) -> Result<Vec<Equilibrium>> {
    let n = c.n_units();
    if n > 12 {
        return Err(Error::InvalidParameter(format!(
            "combinatorial seeding is limited to 12 units, got {n}"
        )));
    }
    let uncoupled = uncoupled_fixed_points(p)?;
    if uncoupled.is_empty() {
        return Ok(Vec::new());
    }
    let n_seeds = uncoupled.len().pow(n as u32);
    let seeds: Vec<Vec<f64>> = (0..n_seeds)
        .map(|mut code| {
            let mut seed = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let fp = &uncoupled[code % uncoupled.len()];
                code /= uncoupled.len();
                seed.push(fp.x);
                seed.push(fp.y);
            }
            seed
        })
        .collect();
    let mut found: Vec<Equilibrium> = seeds
        .par_iter()
        .filter_map(|seed| refine(seed, p, c).ok())
        .collect();
    found.sort_by(|a, b| a.state.partial_cmp(&b.state).unwrap());
    let mut distinct: Vec<Equilibrium> = Vec::new();
    for eq in found {
        let dup = distinct.iter().any(|other| {
            eq.state
                .iter()
                .zip(&other.state)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                < DEDUP_DISTANCE
        });
        if !dup {
            distinct.push(eq);
        }
    }
    Ok(distinct)
}

/// Parameter selected for one-dimensional sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    /// Both coupling strengths moved together (`eps_x = eps_y = value`).
    Eps,
    /// The drive current.
    Current,
}

impl SweepParam {
    pub fn apply(self, p: &ModelParams, c: &CouplingConfig, value: f64) -> (ModelParams, CouplingConfig) {
        match self {
            SweepParam::Eps => (p.clone(), c.clone().with_eps(value, value)),
            SweepParam::Current => (
                ModelParams {
                    current: value,
                    ..p.clone()
                },
                c.clone(),
            ),
        }
    }

    pub fn value(self, p: &ModelParams, c: &CouplingConfig) -> f64 {
        match self {
            SweepParam::Eps => c.eps_x(),
            SweepParam::Current => p.current,
        }
    }
}

/// Codimension-1 events seen along an equilibrium branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EquilibriumEvent {
    /// Branch fold: Newton stops converging and the null direction is real.
    Fold { param: f64 },
    /// A complex eigenvalue pair crosses the imaginary axis.
    Hopf { param: f64 },
}

/// One stored continuation point.
#[derive(Debug, Clone)]
pub struct EquilibriumBranchPoint {
    pub param: f64,
    pub state: NetworkState,
    pub eigenvalues: Vec<Complex64>,
}

#[derive(Debug, Clone, Default)]
pub struct EquilibriumBranch {
    pub points: Vec<EquilibriumBranchPoint>,
    pub events: Vec<EquilibriumEvent>,
    /// Set when the branch ended early (box exit, unresolvable step).
    pub truncated: Option<String>,
}

/// State-space box used to truncate wandering branches.
const BRANCH_BOX_X: (f64, f64) = (-200.0, 100.0);
const BRANCH_BOX_Y: (f64, f64) = (-5.0, 5.0);

fn inside_branch_box(state: &[f64]) -> bool {
    state.chunks_exact(2).all(|u| {
        u[0] >= BRANCH_BOX_X.0
            && u[0] <= BRANCH_BOX_X.1
            && u[1] >= BRANCH_BOX_Y.0
            && u[1] <= BRANCH_BOX_Y.1
    })
}

/// Natural-parameter continuation of one equilibrium with adaptive step
/// halving, Hopf bisection, and fold bracketing on Newton failure.
pub fn continue_branch(
    eq: &Equilibrium,
    param: SweepParam,
    p: &ModelParams,
    c: &CouplingConfig,
    range: (f64, f64),
    step: f64,
) -> Result<EquilibriumBranch> {
    if !(step != 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter("continuation step must be nonzero".into()));
    }
    let start = param.value(p, c);
    if start < range.0.min(range.1) || start > range.0.max(range.1) {
        return Err(Error::InvalidParameter(format!(
            "starting parameter {start} outside range {range:?}"
        )));
    }
    let direction = if range.1 >= start { 1.0 } else { -1.0 };
    let target = if direction > 0.0 { range.1 } else { range.0 };
    let mut branch = EquilibriumBranch::default();
    let mut v = start;
    let (p0, c0) = param.apply(p, c, v);
    let refined = refine(&eq.state, &p0, &c0)?;
    let mut state = refined.state.clone();
    branch.points.push(EquilibriumBranchPoint {
        param: v,
        state: state.clone(),
        eigenvalues: refined.eigenvalues,
    });
    let mut dv = step.abs() * direction;
    let min_dv = step.abs() * 2f64.powi(-14);
    'outer: while (target - v) * direction > 0.0 {
        let mut dv_try = dv.abs().min((target - v).abs()) * direction;
        loop {
            let v_next = v + dv_try;
            let (pn, cn) = param.apply(p, c, v_next);
            match refine_bounded(&state, &pn, &cn) {
                Some(next) => {
                    let prev_ev = &branch.points.last().expect("nonempty").eigenvalues;
                    if let Some(hopf) =
                        bracket_hopf(prev_ev, &next.eigenvalues, v, v_next, &state, param, p, c)
                    {
                        branch.events.push(EquilibriumEvent::Hopf { param: hopf });
                    }
                    v = v_next;
                    state = next.state.clone();
                    branch.points.push(EquilibriumBranchPoint {
                        param: v,
                        state: next.state,
                        eigenvalues: next.eigenvalues,
                    });
                    if !inside_branch_box(&state) {
                        branch.truncated = Some(format!("state left the continuation box at {v}"));
                        break 'outer;
                    }
                    dv = (dv.abs() * 1.4).min(step.abs()) * direction;
                    break;
                }
                None => {
                    dv_try *= 0.5;
                    if dv_try.abs() < min_dv {
                        // persistent failure: bracket the fold if the branch
                        // shows a real eigenvalue heading to zero
                        let last = branch.points.last().expect("nonempty");
                        let null_candidate = last
                            .eigenvalues
                            .iter()
                            .filter(|e| e.im.abs() < 1e-6)
                            .map(|e| e.re.abs())
                            .fold(f64::INFINITY, f64::min);
                        if null_candidate < 1.0 {
                            let fold = bisect_fold(&state, v, v + dv, param, p, c);
                            branch.events.push(EquilibriumEvent::Fold { param: fold });
                        } else {
                            branch.truncated =
                                Some(format!("continuation stalled at {v} without fold signature"));
                        }
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(branch)
}

/// Newton refinement that also rejects jumps to a different branch.
fn refine_bounded(seed: &[f64], p: &ModelParams, c: &CouplingConfig) -> Option<Equilibrium> {
    const JUMP_TOL: f64 = 5.0;
    match refine(seed, p, c) {
        Ok(eq) => {
            let jump = eq
                .state
                .iter()
                .zip(seed)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if jump < JUMP_TOL {
                Some(eq)
            } else {
                None
            }
        }
        Err(_) => None,
    }
}

/// Complex eigenvalues sitting strictly in the right half plane.
fn unstable_complex_count(eigenvalues: &[Complex64]) -> usize {
    eigenvalues
        .iter()
        .filter(|e| e.im.abs() > 1e-9 && e.re > 0.0)
        .count()
}

/// If the number of unstable complex eigenvalues changes between the
/// bracketing branch points, bisect the parameter until the crossing pair's
/// real part is below 1e-8.
#[allow(clippy::too_many_arguments)]
fn bracket_hopf(
    ev_lo: &[Complex64],
    ev_hi: &[Complex64],
    v_lo: f64,
    v_hi: f64,
    state_near: &[f64],
    param: SweepParam,
    p: &ModelParams,
    c: &CouplingConfig,
) -> Option<f64> {
    let count_lo = unstable_complex_count(ev_lo);
    if count_lo == unstable_complex_count(ev_hi) {
        return None;
    }
    let mut lo = v_lo;
    let mut hi = v_hi;
    let mut state = state_near.to_vec();
    let mut last_eq: Option<Equilibrium> = None;
    // width 1e-9 keeps |Re| of the crossing pair below 1e-8 for the
    // eigenvalue slopes encountered here (|dRe/dparam| stays below 10)
    while (hi - lo).abs() > 1e-9 {
        let mid = 0.5 * (lo + hi);
        let (pm, cm) = param.apply(p, c, mid);
        let eq = refine_bounded(&state, &pm, &cm)?;
        state = eq.state.clone();
        if unstable_complex_count(&eq.eigenvalues) == count_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        last_eq = Some(eq);
    }
    let crossing_re = last_eq
        .as_ref()
        .and_then(|eq| {
            eq.eigenvalues
                .iter()
                .filter(|e| e.im.abs() > 1e-9)
                .map(|e| e.re.abs())
                .min_by(|a, b| a.partial_cmp(b).unwrap())
        })
        .unwrap_or(0.0);
    debug_assert!(crossing_re < 1e-6, "hopf refinement left |Re| = {crossing_re}");
    Some(0.5 * (lo + hi))
}

/// Bisection on the Newton-convergence predicate between the last good
/// parameter and the first failing one.
fn bisect_fold(
    state_good: &[f64],
    v_good: f64,
    v_bad: f64,
    param: SweepParam,
    p: &ModelParams,
    c: &CouplingConfig,
) -> f64 {
    let mut lo = v_good;
    let mut hi = v_bad;
    let mut state = state_good.to_vec();
    for _ in 0..60 {
        if (hi - lo).abs() < 1e-7 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (pm, cm) = param.apply(p, c, mid);
        match refine_bounded(&state, &pm, &cm) {
            Some(eq) => {
                state = eq.state;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    0.5 * (lo + hi)
}

#[derive(Serialize)]
struct EquilibriumRecord<'a> {
    state: &'a [f64],
    eigenvalues: Vec<[f64; 2]>,
    label: &'a str,
    residual: f64,
}

/// JSON export of an equilibrium set: state, eigenvalues as `[re, im]`
/// pairs, label and residual per entry.
pub fn write_equilibria_json<W: Write>(equilibria: &[Equilibrium], w: W) -> Result<()> {
    let records: Vec<EquilibriumRecord> = equilibria
        .iter()
        .map(|eq| EquilibriumRecord {
            state: &eq.state,
            eigenvalues: eq.eigenvalues.iter().map(|e| [e.re, e.im]).collect(),
            label: &eq.class_label,
            residual: eq.residual_norm,
        })
        .collect();
    serde_json::to_writer_pretty(w, &records)?;
    Ok(())
}
