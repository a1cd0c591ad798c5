//! Pure states of an `N`-qubit register, dense-angle encoding, reduced
//! density matrices and the bit-indexed kernels behind local observables.
//!
//! Qubit `i` is bit `i` of a basis index (see [`qubit_mask`]).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};

use crate::seed::rng_from_seed;

pub const NORM_TOL: f64 = 1e-10;
const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StateError {
    #[error("dense angle encoding needs an even number of features, got {0}")]
    OddFeatureCount(usize),
    #[error("angle {value} at position {index} is outside [0, pi]")]
    AngleOutOfRange { index: usize, value: f64 },
    #[error("amplitude vector of length {0} is not a power of two")]
    BadLength(usize),
    #[error("state is not normalized: norm^2 = {0}")]
    NotNormalized(f64),
    #[error("bad subsystem {keep:?} for {num_qubits} qubits")]
    BadSubsystem { keep: Vec<usize>, num_qubits: usize },
    #[error("density matrix is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
}

type Result<T> = std::result::Result<T, StateError>;

/// Bit mask selecting qubit `q` in a basis index.
#[inline]
pub const fn qubit_mask(q: usize) -> usize {
    1 << q
}

/// Value (0 or 1) of qubit `q` in basis index `s`.
#[inline]
pub const fn qubit_bit(s: usize, q: usize) -> usize {
    (s >> q) & 1
}

/// Normalized amplitude vector of length `2^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl PureState {
    /// Wraps amplitudes, checking length and normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(StateError::BadLength(len));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    /// Trusted constructor for kernels that preserve the norm.
    pub(crate) fn from_amplitudes_unchecked(num_qubits: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << num_qubits);
        Self { num_qubits, amps }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { num_qubits, amps }
    }

    /// Product state from per-qubit `(|0⟩, |1⟩)` amplitude pairs.
    pub fn product(qubits: &[[Complex64; 2]]) -> Self {
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        for (q, pair) in qubits.iter().enumerate() {
            let half = 1usize << q;
            let mut next = vec![Complex64::new(0.0, 0.0); half << 1];
            for (idx, &a) in amps.iter().enumerate() {
                next[idx] = a * pair[0];
                next[idx | half] = a * pair[1];
            }
            amps = next;
        }
        Self {
            num_qubits: qubits.len(),
            amps,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Max-abs distance between amplitude vectors.
    pub fn max_abs_diff(&self, other: &PureState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// How the second angle of each pair maps to the azimuth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncodingOptions {
    /// Stretch `φ` from `[0, π]` to `[0, 2π]` (full Bloch sphere).
    #[serde(default)]
    pub stretch_phi: bool,
}

/// Single-qubit amplitudes `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
pub fn bloch_qubit(theta: f64, phi: f64) -> [Complex64; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [Complex64::new(c, 0.0), Complex64::from_polar(s, phi)]
}

/// Dense angle encoding: features `(x_{2i}, x_{2i+1})` set the polar and
/// azimuthal angles of qubit `i`.
pub fn encode_dense_angle(angles: &[f64], opts: EncodingOptions) -> Result<PureState> {
    if angles.len() % 2 != 0 {
        return Err(StateError::OddFeatureCount(angles.len()));
    }
    for (index, &value) in angles.iter().enumerate() {
        if !(value >= -ANGLE_TOL && value <= std::f64::consts::PI + ANGLE_TOL) {
            return Err(StateError::AngleOutOfRange { index, value });
        }
    }
    let phi_scale = if opts.stretch_phi { 2.0 } else { 1.0 };
    let qubits: Vec<_> = angles
        .chunks_exact(2)
        .map(|p| bloch_qubit(p[0], phi_scale * p[1]))
        .collect();
    Ok(PureState::product(&qubits))
}

/// `p(s) = |⟨s|ψ⟩|²` over the computational basis.
pub fn probability_vector(state: &PureState) -> Vec<f64> {
    state.amps.iter().map(|a| a.norm_sqr()).collect()
}

/// Reduced state of a subset of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<Complex64>,
    qubits: Vec<usize>,
}

impl DensityMatrix {
    /// Wraps a matrix, checking it is square with a power-of-two size and Hermitian.
    pub fn new(matrix: DMatrix<Complex64>, qubits: Vec<usize>) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() || n != 1 << qubits.len() {
            return Err(StateError::DimMismatch {
                expected: 1 << qubits.len(),
                found: n,
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > NORM_TOL {
            return Err(StateError::NonHermitian(dev));
        }
        Ok(Self { matrix, qubits })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `ρ_keep = Tr_rest |ψ⟩⟨ψ|`. Bit `b` of a reduced index is qubit `keep[b]`.
pub fn partial_trace(state: &PureState, keep: &[usize]) -> Result<DensityMatrix> {
    let n = state.num_qubits;
    let valid = !keep.is_empty()
        && keep.windows(2).all(|w| w[0] < w[1])
        && keep.iter().all(|&q| q < n);
    if !valid {
        return Err(StateError::BadSubsystem {
            keep: keep.to_vec(),
            num_qubits: n,
        });
    }
    let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let dk = 1usize << keep.len();
    let dr = 1usize << rest.len();
    // columns of `m` indexed by the traced-out configuration
    let mut m = DMatrix::<Complex64>::zeros(dk, dr);
    for (s, &a) in state.amps.iter().enumerate() {
        let a_idx = compress(s, keep);
        let r_idx = compress(s, &rest);
        m[(a_idx, r_idx)] = a;
    }
    let rho = &m * m.adjoint();
    Ok(DensityMatrix {
        matrix: rho,
        qubits: keep.to_vec(),
    })
}

/// Gathers the bits of `s` at positions `qubits` into a compact index.
#[inline]
fn compress(s: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (b, &q)| acc | (qubit_bit(s, q) << b))
}

/// `-Σ λ ln λ` in nats; eigenvalues below `1e-12` contribute nothing.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let dev = hermitian_deviation(&rho.matrix);
    if dev > NORM_TOL {
        return Err(StateError::NonHermitian(dev));
    }
    Ok(entropy_of_spectrum(&rho.eigenvalues()))
}

pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .filter(|&&l| l > 1e-12)
        .map(|&l| -l * l.ln())
        .sum()
}

/// Entanglement entropy of the block `keep` for a pure state.
pub fn subsystem_entropy(state: &PureState, keep: &[usize]) -> Result<f64> {
    von_neumann_entropy(&partial_trace(state, keep)?)
}

/// Local Pauli expectations `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of every qubit, flattened
/// site-major. Computed by pairing amplitudes that differ in one bit.
pub fn pauli_expectations(state: &PureState) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * state.num_qubits);
    for q in 0..state.num_qubits {
        let [x, y, z] = single_site_bloch(state, q);
        out.extend_from_slice(&[x, y, z]);
    }
    out
}

/// `⟨σz⟩` of every qubit.
pub fn z_expectations(state: &PureState) -> Vec<f64> {
    (0..state.num_qubits)
        .map(|q| single_site_bloch(state, q)[2])
        .collect()
}

fn single_site_bloch(state: &PureState, q: usize) -> [f64; 3] {
    let mask = qubit_mask(q);
    let mut off = Complex64::new(0.0, 0.0);
    let mut z = 0.0;
    for s in (0..state.amps.len()).filter(|s| s & mask == 0) {
        let a0 = state.amps[s];
        let a1 = state.amps[s | mask];
        off += a0.conj() * a1;
        z += a0.norm_sqr() - a1.norm_sqr();
    }
    [2.0 * off.re, 2.0 * off.im, z]
}

/// Empirical outcome frequencies of `shots` projective measurements.
/// Counts are drawn as a chain of conditional binomials, which is an exact
/// multinomial sample.
pub fn sample_counts(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; probs.len()];
    let mut left = shots;
    let mut mass = 1.0f64;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(&mut rng)
        };
        counts[k] = c;
        left -= c;
        mass -= p;
    }
    counts
}

pub fn sample_shots(probs: &[f64], shots: u64, seed: u64) -> Vec<f64> {
    let shots = shots.max(1);
    sample_counts(probs, shots, seed)
        .into_iter()
        .map(|c| c as f64 / shots as f64)
        .collect()
}
