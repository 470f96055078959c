//! Monte-Carlo attractor discovery: random initial conditions, long
//! integration, feature extraction, threshold grouping, and parameter sweeps
//! counting coexisting attractors.
//!
//! Trajectories that end up on the same attractor produce nearly identical
//! features (amplitudes, frequencies, mean positions, mean pairwise unit
//! distance), so grouping features by a distance threshold in normalized
//! feature space separates the attractors. Equilibria have zero amplitudes
//! and frequencies and are told apart by their mean position alone.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::integrate::{integrate, CrossingDirection, IntegrationSettings, Trajectory};
use crate::lyapunov::{self, DynamicalClass, LyapunovSettings, LyapunovSpectrum};
use crate::model::{network_rhs_into, CouplingConfig, ModelParams, NetworkState};
use crate::{Error, Result};

/// Upward crossings of this membrane potential count as spikes (mV); it sits
/// between the rest state (~ -64) and the spike peak (> 0), so each spike is
/// counted exactly once.
pub const SPIKE_THRESHOLD: f64 = -40.0;
/// Oscillations above this amplitude are "large" (mV).
pub const LA_THRESHOLD: f64 = 20.0;
/// Small-amplitude oscillations stay below this (mV).
pub const SA_CEILING: f64 = 5.0;
/// Default grouping threshold in normalized feature space.
pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.05;

/// Scalar summary of one post-transient trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Time-averaged mean Euclidean distance between unit states.
    pub mean_pairwise_distance: f64,
    /// Per-unit `max - min` of the membrane potential (mV).
    pub per_unit_amplitude: Vec<f64>,
    /// Per-unit spikes per unit time.
    pub per_unit_frequency: Vec<f64>,
    /// Per-unit time averages, interleaved `[<x_1>, <y_1>, ...]`.
    pub per_unit_mean: Vec<f64>,
}

impl FeatureVector {
    pub fn n_units(&self) -> usize {
        self.per_unit_amplitude.len()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.per_unit_amplitude.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Flat layout used for grouping: distance, amplitudes, frequencies, means.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 4 * self.n_units());
        out.push(self.mean_pairwise_distance);
        out.extend_from_slice(&self.per_unit_amplitude);
        out.extend_from_slice(&self.per_unit_frequency);
        out.extend_from_slice(&self.per_unit_mean);
        out
    }
}

/// Uniform i.i.d. initial conditions in a per-variable box, deterministic
/// for a fixed seed.
pub fn sample_ics(bounds: &[(f64, f64)], n: usize, seed: u64) -> Result<Vec<NetworkState>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if bounds.is_empty() {
        return Err(Error::InvalidParameter("empty sampling box".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect())
        .collect())
}

/// The sampling box spanning the uncoupled phase portrait: `x` in
/// `[-90, 20]` mV and `y` in `[0, 1]` for every unit.
pub fn default_ic_box(n_units: usize) -> Vec<(f64, f64)> {
    (0..2 * n_units)
        .map(|i| if i % 2 == 0 { (-90.0, 20.0) } else { (0.0, 1.0) })
        .collect()
}

/// Convenience wrapper integrating the network field.
pub fn integrate_network(
    s0: &[f64],
    p: &ModelParams,
    c: &CouplingConfig,
    cfg: &IntegrationSettings,
) -> Result<Trajectory> {
    if s0.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: s0.len(),
        });
    }
    integrate(|y: &[f64], out: &mut [f64]| network_rhs_into(y, p, c, out), s0, cfg)
}

/// Extracts the grouping features from a post-transient trajectory.
pub fn featurize(traj: &Trajectory) -> Result<FeatureVector> {
    const MIN_SAMPLES: usize = 100;
    if traj.len() < MIN_SAMPLES {
        return Err(Error::TooShortTrajectory {
            needed: MIN_SAMPLES,
            got: traj.len(),
        });
    }
    let n_units = traj.dim() / 2;
    let n_samples = traj.len() as f64;
    let window = traj.times()[traj.len() - 1] - traj.times()[0];
    let mut min_x = vec![f64::INFINITY; n_units];
    let mut max_x = vec![f64::NEG_INFINITY; n_units];
    let mut mean = vec![0.0; 2 * n_units];
    let mut pairwise = 0.0;
    for (_, s) in traj.iter() {
        for i in 0..n_units {
            let x = s[2 * i];
            min_x[i] = min_x[i].min(x);
            max_x[i] = max_x[i].max(x);
            mean[2 * i] += x;
            mean[2 * i + 1] += s[2 * i + 1];
        }
        if n_units > 1 {
            let mut acc = 0.0;
            for i in 0..n_units {
                for j in (i + 1)..n_units {
                    let dx = s[2 * i] - s[2 * j];
                    let dy = s[2 * i + 1] - s[2 * j + 1];
                    acc += (dx * dx + dy * dy).sqrt();
                }
            }
            pairwise += acc / (n_units * (n_units - 1) / 2) as f64;
        }
    }
    for m in &mut mean {
        *m /= n_samples;
    }
    let mut freq = Vec::with_capacity(n_units);
    for i in 0..n_units {
        let crossings = crate::integrate::crossings_in_trajectory(
            traj,
            |s| s[2 * i] - SPIKE_THRESHOLD,
            CrossingDirection::Upward,
        );
        freq.push(crossings.len() as f64 / window);
    }
    let amplitude: Vec<f64> = min_x.iter().zip(&max_x).map(|(lo, hi)| hi - lo).collect();
    let features = FeatureVector {
        mean_pairwise_distance: pairwise / n_samples,
        per_unit_amplitude: amplitude,
        per_unit_frequency: freq,
        per_unit_mean: mean,
    };
    if features.flatten().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    Ok(features)
}

/// Single-linkage grouping of feature vectors.
///
/// Dimensions are min-max normalized over the input set; two features land
/// in the same group iff they are connected by a chain of pairwise distances
/// below `threshold`. Returns one group label per input, numbered by first
/// appearance.
pub fn group(features: &[FeatureVector], threshold: f64) -> Result<Vec<usize>> {
    if features.is_empty() {
        return Err(Error::InvalidParameter("no features to group".into()));
    }
    let flat: Vec<Vec<f64>> = features.iter().map(FeatureVector::flatten).collect();
    let normalized = normalize_min_max(&flat);
    let n = normalized.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let thr_sq = threshold * threshold;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for (a, b) in normalized[i].iter().zip(&normalized[j]) {
                let diff = a - b;
                d += diff * diff;
                if d > thr_sq {
                    break;
                }
            }
            if d <= thr_sq {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        let root = find(&mut parent, i);
        if labels[root] == usize::MAX {
            labels[root] = next;
            next += 1;
        }
        labels[i] = labels[root];
    }
    Ok(labels)
}

fn normalize_min_max(flat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dims = flat[0].len();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for row in flat {
        for (d, v) in row.iter().enumerate() {
            lo[d] = lo[d].min(*v);
            hi[d] = hi[d].max(*v);
        }
    }
    flat.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(d, v)| {
                    let range = hi[d] - lo[d];
                    if range > 1e-12 {
                        (v - lo[d]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// One discovered attractor.
#[derive(Debug, Clone, Serialize)]
pub struct AttractorRecord {
    pub group_id: usize,
    /// Group centroid in raw feature space.
    pub features: FeatureVector,
    /// An on-attractor state (endpoint of the representative trajectory).
    pub representative_state: NetworkState,
    /// Number of initial conditions that landed here.
    pub basin_count: usize,
    pub dynamical_class: DynamicalClass,
    pub lyapunov: Option<LyapunovSpectrum>,
}

/// Options for the attractor census.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusOptions {
    pub n_ics: usize,
    pub seed: u64,
    /// Sampling box; `None` uses [`default_ic_box`].
    pub ic_box: Option<Vec<(f64, f64)>>,
    pub group_threshold: f64,
    pub integration: IntegrationSettings,
    /// Classify each group's representative by its Lyapunov spectrum.
    pub classify: bool,
    /// Tangent count for the classification spectra.
    pub lyapunov_k: usize,
    pub lyapunov: LyapunovSettings,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions {
            n_ics: 1000,
            seed: 0,
            ic_box: None,
            group_threshold: DEFAULT_GROUP_THRESHOLD,
            integration: IntegrationSettings::default(),
            classify: true,
            lyapunov_k: 3,
            lyapunov: LyapunovSettings::default(),
        }
    }
}

/// Census of one coupling strength.
#[derive(Debug, Clone, Serialize)]
pub struct EpsCensus {
    pub eps: f64,
    pub records: Vec<AttractorRecord>,
    /// Initial conditions whose integration failed (diverged or stalled).
    pub n_failed: usize,
}

impl EpsCensus {
    pub fn n_attractors(&self) -> usize {
        self.records.len()
    }
}

/// Runs sample -> integrate -> featurize -> group for each coupling strength
/// in the grid (`eps_x = eps_y = eps`). Individual initial-condition
/// failures are skipped and counted, never fatal.
pub fn census(
    p: &ModelParams,
    c: &CouplingConfig,
    eps_grid: &[f64],
    opts: &CensusOptions,
) -> Result<Vec<EpsCensus>> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidParameter("empty eps grid".into()));
    }
    opts.integration.validate()?;
    let bounds = match &opts.ic_box {
        Some(b) => {
            if b.len() != c.dim() {
                return Err(Error::DimensionMismatch {
                    expected: c.dim(),
                    got: b.len(),
                });
            }
            b.clone()
        }
        None => default_ic_box(c.n_units()),
    };
    let ics = sample_ics(&bounds, opts.n_ics, opts.seed)?;
    eps_grid
        .iter()
        .map(|&eps| {
            let coupled = c.clone().with_eps(eps, eps);
            census_at(p, &coupled, eps, &ics, opts)
        })
        .collect()
}

/// Census of a single configuration with externally supplied initial
/// conditions (used both by [`census`] and directly for fixed topologies
/// with inhomogeneous strengths).
pub fn census_at(
    p: &ModelParams,
    c: &CouplingConfig,
    eps: f64,
    ics: &[NetworkState],
    opts: &CensusOptions,
) -> Result<EpsCensus> {
    let outcomes: Vec<Option<(FeatureVector, NetworkState)>> = ics
        .par_iter()
        .map(|ic| {
            let traj = integrate_network(ic, p, c, &opts.integration).ok()?;
            let features = featurize(&traj).ok()?;
            let last = traj.last_state()?.to_vec();
            Some((features, last))
        })
        .collect();
    let n_failed = outcomes.iter().filter(|o| o.is_none()).count();
    let kept: Vec<(FeatureVector, NetworkState)> = outcomes.into_iter().flatten().collect();
    if kept.is_empty() {
        return Ok(EpsCensus {
            eps,
            records: Vec::new(),
            n_failed,
        });
    }
    let features: Vec<FeatureVector> = kept.iter().map(|(f, _)| f.clone()).collect();
    let labels = group(&features, opts.group_threshold)?;
    let n_groups = labels.iter().max().map_or(0, |m| m + 1);

    let flat: Vec<Vec<f64>> = features.iter().map(FeatureVector::flatten).collect();
    let normalized = normalize_min_max(&flat);
    let mut records = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let members: Vec<usize> = (0..kept.len()).filter(|&i| labels[i] == g).collect();
        let centroid_norm: Vec<f64> = {
            let dims = normalized[0].len();
            let mut acc = vec![0.0; dims];
            for &m in &members {
                for (a, v) in acc.iter_mut().zip(&normalized[m]) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / members.len() as f64).collect()
        };
        let representative = *members
            .iter()
            .min_by(|&&a, &&b| {
                let da = sq_dist(&normalized[a], &centroid_norm);
                let db = sq_dist(&normalized[b], &centroid_norm);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .expect("nonempty group");
        let centroid = centroid_features(&features, &members);
        records.push(AttractorRecord {
            group_id: g,
            features: centroid,
            representative_state: kept[representative].1.clone(),
            basin_count: members.len(),
            dynamical_class: DynamicalClass::Unclassified,
            lyapunov: None,
        });
    }

    if opts.classify {
        let k = opts.lyapunov_k.min(c.dim()).max(1);
        let specs: Vec<Option<LyapunovSpectrum>> = records
            .par_iter()
            .map(|rec| lyapunov::spectrum(&rec.representative_state, k, p, c, &opts.lyapunov).ok())
            .collect();
        for (rec, spec) in records.iter_mut().zip(specs) {
            rec.dynamical_class = match &spec {
                Some(s) => lyapunov::classify_dynamics(s, &rec.features),
                None => DynamicalClass::Unclassified,
            };
            rec.lyapunov = spec;
        }
    }
    Ok(EpsCensus {
        eps,
        records,
        n_failed,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid_features(features: &[FeatureVector], members: &[usize]) -> FeatureVector {
    let n_units = features[members[0]].n_units();
    let mut out = FeatureVector {
        mean_pairwise_distance: 0.0,
        per_unit_amplitude: vec![0.0; n_units],
        per_unit_frequency: vec![0.0; n_units],
        per_unit_mean: vec![0.0; 2 * n_units],
    };
    for &m in members {
        let f = &features[m];
        out.mean_pairwise_distance += f.mean_pairwise_distance;
        for i in 0..n_units {
            out.per_unit_amplitude[i] += f.per_unit_amplitude[i];
            out.per_unit_frequency[i] += f.per_unit_frequency[i];
        }
        for i in 0..2 * n_units {
            out.per_unit_mean[i] += f.per_unit_mean[i];
        }
    }
    let inv = 1.0 / members.len() as f64;
    out.mean_pairwise_distance *= inv;
    out.per_unit_amplitude.iter_mut().for_each(|v| *v *= inv);
    out.per_unit_frequency.iter_mut().for_each(|v| *v *= inv);
    out.per_unit_mean.iter_mut().for_each(|v| *v *= inv);
    out
}

/// A solitary-state row: the one large-amplitude unit with its degree.
#[derive(Debug, Clone, Serialize)]
pub struct SolitaryRow {
    pub group_id: usize,
    pub unit: usize,
    pub degree: usize,
    pub amplitude: f64,
}

/// Degree-vs-amplitude table over the solitary attractors of a census, with
/// the Spearman rank correlation between degree and amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct DegreeAmplitudeReport {
    pub rows: Vec<SolitaryRow>,
    pub rank_correlation: Option<f64>,
}

/// Picks out solitary-type attractors (exactly one unit above
/// [`LA_THRESHOLD`], the rest below [`SA_CEILING`]) and pairs the solitary
/// unit's degree with its oscillation amplitude.
pub fn degree_amplitude_report(records: &[AttractorRecord], c: &CouplingConfig) -> DegreeAmplitudeReport {
    let mut rows = Vec::new();
    for rec in records {
        let amps = &rec.features.per_unit_amplitude;
        let large: Vec<usize> = (0..amps.len()).filter(|&i| amps[i] >= LA_THRESHOLD).collect();
        if large.len() != 1 {
            continue;
        }
        let solitary = large[0];
        if (0..amps.len()).any(|i| i != solitary && amps[i] > SA_CEILING) {
            continue;
        }
        rows.push(SolitaryRow {
            group_id: rec.group_id,
            unit: solitary,
            degree: c.degree(solitary),
            amplitude: amps[solitary],
        });
    }
    let rank_correlation = spearman(
        &rows.iter().map(|r| r.degree as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.amplitude).collect::<Vec<_>>(),
    );
    DegreeAmplitudeReport {
        rows,
        rank_correlation,
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &m in &idx[i..=j] {
            out[m] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// degenerate (constant) margin.
fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// The example 10-unit random connected topology shipped with the toolkit
/// (degrees range from 1 to 5).
pub fn example_topology_n10(eps: f64) -> CouplingConfig {
    CouplingConfig::new(10, EXAMPLE_N10_EDGES, eps, eps).expect("valid example topology")
}

/// Edges of the example topology, 0-based.
pub const EXAMPLE_N10_EDGES: &[(usize, usize)] = &[
    (0, 9),
    (0, 4),
    (1, 2),
    (1, 5),
    (1, 8),
    (2, 3),
    (2, 6),
    (2, 9),
    (3, 4),
    (3, 7),
    (4, 5),
    (4, 8),
    (4, 9),
    (5, 6),
    (6, 7),
];

/// Per-eps census CSV:
/// `group_id,basin_count,class,mean_pairwise_distance,amp_1..amp_N,freq_1..freq_N,mean_x_1,mean_y_1,..,lyap_1..lyap_k,converged`.
pub fn write_census_csv<W: Write>(census: &EpsCensus, n_units: usize, k: usize, mut w: W) -> Result<()> {
    write!(w, "group_id,basin_count,class,mean_pairwise_distance")?;
    for i in 1..=n_units {
        write!(w, ",amp_{i}")?;
    }
    for i in 1..=n_units {
        write!(w, ",freq_{i}")?;
    }
    for i in 1..=n_units {
        write!(w, ",mean_x_{i},mean_y_{i}")?;
    }
    for j in 1..=k {
        write!(w, ",lyap_{j}")?;
    }
    writeln!(w, ",converged")?;
    for rec in &census.records {
        write!(
            w,
            "{},{},{},{:.16e}",
            rec.group_id, rec.basin_count, rec.dynamical_class, rec.features.mean_pairwise_distance
        )?;
        for v in &rec.features.per_unit_amplitude {
            write!(w, ",{v:.16e}")?;
        }
        for v in &rec.features.per_unit_frequency {
            write!(w, ",{v:.16e}")?;
        }
        for v in &rec.features.per_unit_mean {
            write!(w, ",{v:.16e}")?;
        }
        match &rec.lyapunov {
            Some(spec) => {
                for j in 0..k {
                    match spec.exponents.get(j) {
                        Some(l) => write!(w, ",{l:.16e}")?,
                        None => write!(w, ",")?,
                    }
                }
                writeln!(w, ",{}", spec.converged)?;
            }
            None => {
                for _ in 0..k {
                    write!(w, ",")?;
                }
                writeln!(w, ",")?;
            }
        }
    }
    Ok(())
}

/// Sweep summary CSV: `eps,n_attractors`.
pub fn write_census_summary_csv<W: Write>(sweep: &[EpsCensus], mut w: W) -> Result<()> {
    writeln!(w, "eps,n_attractors")?;
    for c in sweep {
        writeln!(w, "{:.16e},{}", c.eps, c.n_attractors())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_inside_box() {
        let bounds = default_ic_box(2);
        let a = sample_ics(&bounds, 1000, 7).unwrap();
        let b = sample_ics(&bounds, 1000, 7).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.len(), 4);
            for (v, &(lo, hi)) in s.iter().zip(&bounds) {
                assert!(*v >= lo && *v < hi);
            }
        }
        let c = sample_ics(&bounds, 1000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_means_approach_box_midpoints() {
        let bounds = default_ic_box(2);
        let samples = sample_ics(&bounds, 1000, 3).unwrap();
        for d in 0..4 {
            let mean: f64 = samples.iter().map(|s| s[d]).sum::<f64>() / samples.len() as f64;
            let (lo, hi) = bounds[d];
            let mid = 0.5 * (lo + hi);
            assert!(
                (mean - mid).abs() < 0.05 * (hi - lo),
                "dim {d}: mean {mean} vs mid {mid}"
            );
        }
    }

    #[test]
    fn constant_trajectory_features_are_position_only() {
        let mut traj = Trajectory::new(4);
        for k in 0..200 {
            traj.push(k as f64 * 0.05, &[-64.65, 0.00036, -64.65, 0.00036]);
        }
        let f = featurize(&traj).unwrap();
        assert_eq!(f.per_unit_amplitude, vec![0.0, 0.0]);
        assert_eq!(f.per_unit_frequency, vec![0.0, 0.0]);
        assert_eq!(f.mean_pairwise_distance, 0.0);
        assert!((f.per_unit_mean[0] - -64.65).abs() < 1e-12);
    }

    #[test]
    fn featurize_counts_spikes() {
        // synthetic spikes: x sweeps from -60 to 0 and back every 10 time units
        let mut traj = Trajectory::new(2);
        let dt = 0.05;
        let n = 4000;
        for k in 0..n {
            let t = k as f64 * dt;
            let phase = (t / 10.0) * std::f64::consts::TAU;
            let x = -30.0 + 30.0 * phase.sin();
            traj.push(t, &[x, 0.1]);
        }
        let f = featurize(&traj).unwrap();
        // 10-unit period over a 199.95 window -> ~0.1 spikes per time unit
        assert!((f.per_unit_frequency[0] - 0.1).abs() < 0.01);
        assert!((f.per_unit_amplitude[0] - 60.0).abs() < 0.1);
    }

    #[test]
    fn too_short_trajectory_is_an_error() {
        let mut traj = Trajectory::new(2);
        for k in 0..50 {
            traj.push(k as f64, &[0.0, 0.0]);
        }
        assert!(matches!(
            featurize(&traj),
            Err(Error::TooShortTrajectory { .. })
        ));
    }

    fn feature_at(amp: f64, freq: f64, mx: f64) -> FeatureVector {
        FeatureVector {
            mean_pairwise_distance: 0.0,
            per_unit_amplitude: vec![amp],
            per_unit_frequency: vec![freq],
            per_unit_mean: vec![mx, 0.0],
        }
    }

    #[test]
    fn identical_features_form_one_group() {
        let fs = vec![feature_at(40.0, 0.8, -30.0); 17];
        let labels = group(&fs, 0.05).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn well_separated_clusters_split_in_any_order() {
        let a = feature_at(40.0, 0.8, -30.0);
        let b = feature_at(0.0, 0.0, -64.0);
        let fs = vec![a.clone(), b.clone(), a.clone(), b.clone(), b.clone()];
        let labels = group(&fs, 0.05).unwrap();
        assert_eq!(labels, vec![0, 1, 0, 1, 1]);
        let fs_rev: Vec<FeatureVector> = fs.iter().rev().cloned().collect();
        let labels_rev = group(&fs_rev, 0.05).unwrap();
        assert_eq!(labels_rev, vec![0, 0, 1, 0, 1]);
        // same partition either way
        assert_eq!(labels_rev.iter().filter(|&&l| l == 0).count(), 3);
    }

    #[test]
    fn chained_points_merge_under_single_linkage() {
        // three features, consecutive ones within threshold, ends far apart
        let fs = vec![
            feature_at(40.0, 0.8, -30.0),
            feature_at(41.0, 0.8, -30.0),
            feature_at(42.0, 0.8, -30.0),
        ];
        // normalized amplitude spacing is 0.5 between neighbors
        let labels = group(&fs, 0.75).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        let labels = group(&fs, 0.3).unwrap();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_none());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn degree_amplitude_table_flags_solitary_attractors_only() {
        let c = CouplingConfig::new(3, &[(0, 1), (1, 2)], 0.1, 0.1).unwrap();
        let solitary = AttractorRecord {
            group_id: 0,
            features: FeatureVector {
                mean_pairwise_distance: 10.0,
                per_unit_amplitude: vec![45.0, 1.0, 0.5],
                per_unit_frequency: vec![0.5, 0.0, 0.0],
                per_unit_mean: vec![0.0; 6],
            },
            representative_state: vec![0.0; 6],
            basin_count: 5,
            dynamical_class: DynamicalClass::Periodic,
            lyapunov: None,
        };
        let mut two_large = solitary.clone();
        two_large.group_id = 1;
        two_large.features.per_unit_amplitude = vec![45.0, 44.0, 0.5];
        let report = degree_amplitude_report(&[solitary, two_large], &c);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].unit, 0);
        assert_eq!(report.rows[0].degree, 1);
        assert!(report.rank_correlation.is_none());
    }

    #[test]
    fn example_topology_is_connected_with_degree_spread() {
        let c = example_topology_n10(0.15);
        assert!(c.is_connected());
        let degrees: Vec<usize> = (0..10).map(|u| c.degree(u)).collect();
        assert_eq!(degrees.iter().sum::<usize>(), 2 * EXAMPLE_N10_EDGES.len());
        assert!(degrees.iter().any(|&d| d <= 2));
        assert!(degrees.iter().any(|&d| d >= 5));
    }

    #[test]
    fn summary_csv_lists_eps_and_counts() {
        let sweep = vec![EpsCensus {
            eps: 0.05,
            records: Vec::new(),
            n_failed: 2,
        }];
        let mut buf = Vec::new();
        write_census_summary_csv(&sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eps,n_attractors\n"));
        assert!(text.contains(",0"));
    }
}
