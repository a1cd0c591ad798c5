//! Diagnostics on top of the reservoir: clustering of feature clouds,
//! entanglement growth and its scaling collapse, and the light-cone checks
//! of the free-fermion picture.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::classifier::{accuracy, train, TrainConfig};
use crate::features::FeatureTable;
use crate::hamiltonian::{
    single_particle_propagator, single_particle_propagator_series, Boundary, SpectralDecomposition,
};
use crate::qcore::{bloch_qubit, probability_vector, subsystem_entropy, PureState};
use crate::seed::labeled_rng;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("label sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("half-chain cut needs an even qubit count, got {0}")]
    OddN(usize),
    #[error("need at least two curves, got {0}")]
    TooFewCurves(usize),
    #[error("bessel_j({n}, {x}) is outside |n| <= 60, |x| <= 100")]
    OutOfRange { n: i32, x: f64 },
    #[error("chain of {n} sites is too short: {reason}")]
    ChainTooShort { n: usize, reason: String },
    #[error("feature tables at different points do not share sample ids")]
    SampleMismatch,
    #[error(transparent)]
    State(#[from] crate::qcore::StateError),
    #[error(transparent)]
    Hamiltonian(#[from] crate::hamiltonian::HamiltonianError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
}

type Result<T> = std::result::Result<T, AnalysisError>;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every Lloyd step.
    pub history: Vec<f64>,
}

impl Clustering {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_chunks_exact(dim)
        .map(|x| nearest(x, centroids, dim))
        .unzip()
}

fn kmeans_pp(points: &[f64], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let n = points.len() / dim;
    let mut rng = labeled_rng(seed, "kmeans/init");
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations. Points are the rows of a
/// row-major `n × dim` slice.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    let n = if dim == 0 { 0 } else { points.len() / dim };
    if k > n || k == 0 {
        return Err(AnalysisError::KTooLarge { k, n });
    }
    let mut centroids = kmeans_pp(points, dim, k, seed);
    let (mut assignments, mut dists) = assign(points, dim, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut history = vec![inertia];
    for _ in 0..max_iters {
        update_centroids(points, dim, k, &mut assignments, &dists, &mut centroids);
        let (next, next_d) = assign(points, dim, &centroids);
        let next_inertia: f64 = next_d.iter().sum();
        history.push(next_inertia);
        let stable = next == assignments;
        let small = inertia <= 0.0 || (inertia - next_inertia).abs() / inertia < 1e-6;
        assignments = next;
        dists = next_d;
        inertia = next_inertia;
        if stable || small {
            break;
        }
    }
    Ok(Clustering {
        k,
        dim,
        centroids,
        assignments,
        inertia,
        history,
    })
}

/// Means of the current clusters. An empty cluster takes over the point
/// farthest from its centroid among clusters with more than one member.
fn update_centroids(
    points: &[f64],
    dim: usize,
    k: usize,
    assignments: &mut [usize],
    dists: &[f64],
    centroids: &mut [f64],
) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut taken = vec![false; assignments.len()];
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..assignments.len())
            .filter(|&i| !taken[i] && sizes[assignments[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = far {
            sizes[assignments[i]] -= 1;
            assignments[i] = c;
            sizes[c] = 1;
            taken[i] = true;
        }
    }
    centroids.iter_mut().for_each(|v| *v = 0.0);
    for (i, x) in points.chunks_exact(dim).enumerate() {
        let cen = &mut centroids[assignments[i] * dim..(assignments[i] + 1) * dim];
        for (c, v) in cen.iter_mut().zip(x) {
            *c += v;
        }
    }
    for (c, cen) in centroids.chunks_exact_mut(dim).enumerate() {
        let s = sizes[c].max(1) as f64;
        cen.iter_mut().for_each(|v| *v /= s);
    }
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table of two labelings.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(AnalysisError::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len();
    let rows = pred.iter().max().map_or(0, |m| m + 1);
    let cols = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; rows * cols];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p * cols + t] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let a: f64 = (0..rows).map(|r| choose2(table[r * cols..(r + 1) * cols].iter().sum())).sum();
    let b: f64 = (0..cols)
        .map(|c| choose2((0..rows).map(|r| table[r * cols + c]).sum()))
        .sum();
    let total = choose2(n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = (a + b) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InertiaRow {
    pub t: f64,
    pub inertia: f64,
    pub ari: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// One feature snapshot of the sweep: train and test tables at time `t`.
pub struct SweepPoint<'a> {
    pub t: f64,
    pub train: &'a FeatureTable,
    pub test: &'a FeatureTable,
}

/// Clusters the training features at every time point and trains the
/// classifier on them. Inertia and the index are taken on the training split.
pub fn inertia_accuracy_sweep(
    points: &[SweepPoint<'_>],
    k: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<Vec<InertiaRow>> {
    if let Some(first) = points.first() {
        let same = points.iter().all(|p| {
            p.train.sample_ids() == first.train.sample_ids() && p.test.sample_ids() == first.test.sample_ids()
        });
        if !same {
            return Err(AnalysisError::SampleMismatch);
        }
    }
    points
        .iter()
        .map(|p| {
            let cl = kmeans(p.train.rows(), p.train.dim(), k, seed, 300)?;
            let ari = adjusted_rand_index(&cl.assignments, p.train.labels())?;
            let out = train(p.train, cfg, seed)?;
            Ok(InertiaRow {
                t: p.t,
                inertia: cl.inertia,
                ari,
                train_acc: accuracy(&out.model, p.train)?,
                test_acc: accuracy(&out.model, p.test)?,
            })
        })
        .collect()
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Which initial states the entropy sweep evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialStatePolicy {
    /// Dense-angle-encoded dataset samples.
    #[default]
    Encoded,
    /// `|0101…⟩`
    Neel,
    /// Haar-random single-qubit product states.
    RandomProduct,
}

/// Qubit `i` in `|i mod 2⟩`.
pub fn neel_state(num_qubits: usize) -> PureState {
    let index = (0..num_qubits).filter(|i| i % 2 == 1).fold(0, |acc, i| acc | (1 << i));
    PureState::basis(num_qubits, index)
}

pub fn random_product_states(num_qubits: usize, count: usize, seed: u64) -> Vec<PureState> {
    let mut rng = labeled_rng(seed, &format!("entropy/product/{num_qubits}"));
    (0..count)
        .map(|_| {
            let qubits: Vec<_> = (0..num_qubits)
                .map(|_| {
                    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
                    let phi = 2.0 * PI * rng.random::<f64>();
                    bloch_qubit(theta, phi)
                })
                .collect();
            PureState::product(&qubits)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyCurve {
    pub num_qubits: usize,
    pub times: Vec<f64>,
    /// Entropy of qubits `0..N/2`, averaged over the initial states.
    pub half: Vec<f64>,
    /// Single-qubit entropy averaged over sites and initial states.
    pub single: Vec<f64>,
}

impl EntropyCurve {
    /// Half-chain entropy divided by `N/2`, against `t/N`.
    pub fn rescaled(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_qubits as f64;
        (
            self.times.iter().map(|t| t / n).collect(),
            self.half.iter().map(|s| s / (n / 2.0)).collect(),
        )
    }

    /// Least-squares slope of the half-chain entropy over `lo ≤ t ≤ hi`.
    pub fn half_slope(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.half)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(t, s)| (*t, *s))
            .collect();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ms = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|(t, s)| (t - mt) * (s - ms)).sum();
        let den: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
        num / den
    }

    /// Mean half-chain entropy over the last third of the grid.
    pub fn saturation_value(&self) -> f64 {
        let from = self.half.len() * 2 / 3;
        let tail = &self.half[from..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Half-chain and single-qubit entropies of `states` evolved under `dec`.
pub fn entropy_curve(dec: &SpectralDecomposition, states: &[PureState], times: &[f64]) -> Result<EntropyCurve> {
    let n = dec.num_qubits();
    if n % 2 != 0 {
        return Err(AnalysisError::OddN(n));
    }
    let proj = dec.project(states)?;
    let cut: Vec<usize> = (0..n / 2).collect();
    let count = states.len().max(1) as f64;
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, f64)> {
            let (mut half, mut single) = (0.0, 0.0);
            for s in proj.states_at(t) {
                half += subsystem_entropy(&s, &cut)?;
                for q in 0..n {
                    single += subsystem_entropy(&s, &[q])?;
                }
            }
            Ok((half / count, single / (count * n as f64)))
        })
        .collect::<Result<_>>()?;
    Ok(EntropyCurve {
        num_qubits: n,
        times: times.to_vec(),
        half: rows.iter().map(|r| r.0.max(0.0)).collect(),
        single: rows.iter().map(|r| r.1.max(0.0)).collect(),
    })
}

/// One curve per decomposition, each paired with its own initial states.
pub fn entropy_sweep(runs: &[(&SpectralDecomposition, Vec<PureState>)], times: &[f64]) -> Result<Vec<EntropyCurve>> {
    runs.iter().map(|(dec, states)| entropy_curve(dec, states, times)).collect()
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Collapse {
    /// Common `t/N` grid.
    pub grid: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `S_N/(N/2)` on the grid, one row per curve.
    pub values: Vec<Vec<f64>>,
    /// Largest spread between curves for `t/N < 0.5`.
    pub deviation: f64,
    /// First `t/N` where each curve reaches 90% of its saturation value.
    pub onsets: Vec<f64>,
    /// Local maxima of each rescaled curve beyond `t = N/2`.
    pub post_maxima: Vec<usize>,
    /// Two dominant periods (in units of `t`) of the oscillation beyond `t = N/2`.
    pub periods: Vec<Vec<f64>>,
}

pub const COLLAPSE_GRID_POINTS: usize = 201;

pub fn scaling_collapse(curves: &[EntropyCurve]) -> Result<Collapse> {
    if curves.len() < 2 {
        return Err(AnalysisError::TooFewCurves(curves.len()));
    }
    let rescaled: Vec<_> = curves.iter().map(EntropyCurve::rescaled).collect();
    let lo = rescaled.iter().map(|(x, _)| x[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = rescaled.iter().map(|(x, _)| x[x.len() - 1]).fold(f64::INFINITY, f64::min);
    let m = COLLAPSE_GRID_POINTS;
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let values: Vec<Vec<f64>> = rescaled
        .iter()
        .map(|(xs, ys)| grid.iter().map(|&x| interpolate(xs, ys, x)).collect())
        .collect();
    let mut deviation: f64 = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        if x >= 0.5 {
            break;
        }
        let col = values.iter().map(|v| v[i]);
        let (mn, mx) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        deviation = deviation.max(mx - mn);
    }
    let onsets = curves.iter().map(saturation_onset).collect();
    let post_maxima = curves.iter().map(post_saturation_maxima).collect();
    let periods = curves.iter().map(|c| oscillation_periods(c, 2)).collect();
    Ok(Collapse {
        grid,
        sizes: curves.iter().map(|c| c.num_qubits).collect(),
        values,
        deviation,
        onsets,
        post_maxima,
        periods,
    })
}

/// First `t/N` at which the half-chain entropy reaches 90% of its saturation value.
pub fn saturation_onset(curve: &EntropyCurve) -> f64 {
    let target = 0.9 * curve.saturation_value();
    let n = curve.num_qubits as f64;
    curve
        .times
        .iter()
        .zip(&curve.half)
        .find(|(_, s)| **s >= target)
        .map_or(f64::NAN, |(t, _)| t / n)
}

fn post_tail(curve: &EntropyCurve) -> (Vec<f64>, Vec<f64>) {
    let half_n = curve.num_qubits as f64 / 2.0;
    curve
        .times
        .iter()
        .zip(&curve.half)
        .filter(|(t, _)| **t > half_n)
        .map(|(t, s)| (*t, *s))
        .unzip()
}

pub fn post_saturation_maxima(curve: &EntropyCurve) -> usize {
    let (_, s) = post_tail(curve);
    s.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
}

/// Periods of the strongest Fourier components of the entropy beyond
/// `t = N/2`, after resampling onto a uniform grid.
pub fn oscillation_periods(curve: &EntropyCurve, count: usize) -> Vec<f64> {
    let (t, s) = post_tail(curve);
    if t.len() < 8 {
        return Vec::new();
    }
    let len = t.len();
    let dt = (t[len - 1] - t[0]) / (len - 1) as f64;
    let samples: Vec<f64> = (0..len).map(|i| interpolate(&t, &s, t[0] + dt * i as f64)).collect();
    let mean = samples.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mut peaks: Vec<(usize, f64)> = (1..len / 2)
        .filter(|&i| {
            let m = buf[i].norm();
            m >= buf[i - 1].norm() && m >= buf[i + 1].norm()
        })
        .map(|i| (i, buf[i].norm()))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
        .into_iter()
        .take(count)
        .map(|(i, _)| len as f64 * dt / i as f64)
        .collect()
}

/// Largest change of any eigenbasis outcome probability over `times`
/// relative to `t = 0`.
pub fn eigenbasis_stationarity(dec: &SpectralDecomposition, states: &[PureState], times: &[f64]) -> Result<f64> {
    let proj = dec.project(states)?;
    let p0: Vec<Vec<f64>> = (0..proj.len()).map(|i| probability_vector(&proj.coefficients(i))).collect();
    let mut worst: f64 = 0.0;
    for &t in times {
        for (i, s) in proj.states_at(t).iter().enumerate() {
            let p = probability_vector(&dec.to_eigenbasis(s)?);
            for (a, b) in p.iter().zip(&p0[i]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// Bessel function of the first kind of integer order.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if n.abs() > 60 || !(x.abs() <= 100.0) {
        return Err(AnalysisError::OutOfRange { n, x });
    }
    let order = n.unsigned_abs() as usize;
    let mut value = if x.abs() < 8.0 {
        bessel_series(order, x.abs())
    } else {
        bessel_miller(order, x.abs())
    };
    let odd = |k: usize| k % 2 == 1;
    if x < 0.0 && odd(order) {
        value = -value;
    }
    if n < 0 && odd(order) {
        value = -value;
    }
    Ok(value)
}

/// `Σ_k (−1)^k (x/2)^{2k+n} / (k! (k+n)!)`
pub fn bessel_series(n: usize, x: f64) -> f64 {
    let h = x / 2.0;
    let mut term = (1..=n).fold(1.0, |acc, i| acc * h / i as f64);
    let mut sum = term;
    for k in 1..200 {
        term *= -h * h / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Downward recurrence `J_{k−1} = (2k/x) J_k − J_{k+1}`, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
fn bessel_miller(n: usize, x: f64) -> f64 {
    let top = (n as f64).max(x);
    let m = 2 * ((top + 20.0 + (40.0 * top).sqrt()) as usize / 2 + 1);
    let (mut next, mut cur) = (0.0f64, 1e-30f64);
    let mut sum = 2.0 * cur;
    let mut ans = if m == n { cur } else { 0.0 };
    for k in (1..=m).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        let idx = k - 1;
        if idx == n {
            ans = cur;
        }
        if idx == 0 {
            sum += cur;
        } else if idx % 2 == 0 {
            sum += 2.0 * cur;
        }
        if cur.abs() > 1e200 {
            cur *= 1e-200;
            next *= 1e-200;
            sum *= 1e-200;
            ans *= 1e-200;
        }
    }
    ans / sum
}

/// `ε(k) = 2J cos k`
pub fn dispersion(k: f64, coupling: f64) -> f64 {
    2.0 * coupling * k.cos()
}

/// `v_g(k) = dε/dk = −2J sin k`
pub fn group_velocity(k: f64, coupling: f64) -> f64 {
    -2.0 * coupling * k.sin()
}

/// Largest `|v_g|` over `points` evenly spaced momenta in `[−π, π]`.
pub fn max_group_velocity(coupling: f64, points: usize) -> f64 {
    (0..points)
        .map(|i| -PI + 2.0 * PI * i as f64 / (points - 1) as f64)
        .map(|k| group_velocity(k, coupling).abs())
        .fold(0.0, f64::max)
}

/// Symbols of the general Lieb–Robinson bound
/// `‖[A(t), B]‖ ≤ c ‖A‖ ‖B‖ e^{−μ (d(X,Y) − v|t|)}`. Kept as a record of
/// what the propagator checks stand in for; nothing here is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LrBoundParams {
    pub interaction_norm: Option<f64>,
    pub c: Option<f64>,
    pub mu: Option<f64>,
    pub velocity: Option<f64>,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrRow {
    pub t: f64,
    /// Largest `| |u_jk| − |J_{j−k}(2Jt)| |` over the bulk pairs.
    pub bulk_deviation: f64,
    /// Largest `|u_jk| · e^{|j−k| − 2Jt}` over pairs with `|j−k| > 2Jt + 5`,
    /// taken from the series propagator.
    pub cone_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrReport {
    pub num_sites: usize,
    pub coupling: f64,
    pub rows: Vec<LrRow>,
    pub max_deviation: f64,
    pub cone_violation: bool,
}

/// Sites that count as bulk: more than five away from either end.
pub const LR_EDGE: usize = 5;
/// Largest separation compared against the Bessel profile.
pub const LR_MAX_SEPARATION: usize = 10;

/// Compares the finite-chain propagator with the infinite-chain Bessel
/// profile on bulk pairs and checks suppression outside the light cone.
pub fn lr_check(num_sites: usize, coupling: f64, times: &[f64], boundary: Boundary) -> Result<LrReport> {
    if num_sites < 20 {
        return Err(AnalysisError::ChainTooShort {
            n: num_sites,
            reason: "bulk comparison needs at least 20 sites".into(),
        });
    }
    let t_max = (num_sites as f64 - 10.0) / (4.0 * coupling.abs());
    let bulk = |j: usize| j > LR_EDGE && j < num_sites - LR_EDGE;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        if t > t_max {
            return Err(AnalysisError::ChainTooShort {
                n: num_sites,
                reason: format!("t = {t} exceeds {t_max}"),
            });
        }
        let prop = single_particle_propagator(num_sites, coupling, t, boundary);
        let tails = single_particle_propagator_series(num_sites, coupling, t, boundary);
        let front = 2.0 * coupling.abs() * t;
        let (mut dev, mut ratio) = (0.0f64, 0.0f64);
        for j in 0..num_sites {
            for k in 0..num_sites {
                let sep = j.abs_diff(k);
                let amp = prop.amplitude(j, k);
                if bulk(j) && bulk(k) && sep <= LR_MAX_SEPARATION {
                    let exact = bessel_j(j as i32 - k as i32, 2.0 * coupling * t)?.abs();
                    dev = dev.max((amp - exact).abs());
                }
                if sep as f64 > front + 5.0 {
                    ratio = ratio.max(tails.amplitude(j, k) * (sep as f64 - front).exp());
                }
            }
        }
        rows.push(LrRow {
            t,
            bulk_deviation: dev,
            cone_ratio: ratio,
        });
    }
    let max_deviation = rows.iter().map(|r| r.bulk_deviation).fold(0.0, f64::max);
    let cone_violation = rows.iter().any(|r| r.cone_ratio >= 1.0);
    Ok(LrReport {
        num_sites,
        coupling,
        rows,
        max_deviation,
        cone_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationProfile {
    pub origin: usize,
    /// `|u_{k,j0}(t)|` for every site `k`.
    pub amplitudes: Vec<f64>,
    /// Site of the outermost local maximum.
    pub front_site: usize,
    pub front_distance: usize,
}

/// Spreading of a single excitation placed on site `origin` of an open chain.
pub fn localized_excitation_profile(num_sites: usize, coupling: f64, origin: usize, t: f64) -> Result<ExcitationProfile> {
    let reach = (2.0 * coupling.abs() * t).ceil() as usize + 5;
    if origin >= num_sites || origin < reach || num_sites - 1 - origin < reach {
        return Err(AnalysisError::ChainTooShort {
            n: num_sites,
            reason: format!("site {origin} is within {reach} of an end"),
        });
    }
    let prop = single_particle_propagator(num_sites, coupling, t, Boundary::Open);
    let amplitudes: Vec<f64> = (0..num_sites).map(|k| prop.amplitude(k, origin)).collect();
    let peak = amplitudes.iter().copied().fold(0.0, f64::max);
    let is_max = |k: usize| {
        let a = amplitudes[k];
        let left = if k > 0 { amplitudes[k - 1] } else { 0.0 };
        let right = amplitudes.get(k + 1).copied().unwrap_or(0.0);
        a > 1e-6 * peak && a >= left && a >= right
    };
    let front_site = (0..num_sites)
        .filter(|&k| is_max(k))
        .max_by_key(|&k| (k.abs_diff(origin), std::cmp::Reverse(k)))
        .unwrap_or(origin);
    Ok(ExcitationProfile {
        origin,
        amplitudes,
        front_site,
        front_distance: front_site.abs_diff(origin),
    })
}
