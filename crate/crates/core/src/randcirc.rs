//! Random reservoirs: Haar-distributed global unitaries and circuits of
//! random two-qubit gates on neighbouring pairs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::qcore::{qubit_mask, PureState, NORM_TOL};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CircuitError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("bad qubit pair ({0}, {1}) for {2} qubits")]
    BadPair(usize, usize, usize),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
}

type Result<T> = std::result::Result<T, CircuitError>;

/// A unitary matrix and the seed it was drawn from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    pub matrix: DMatrix<Complex64>,
    pub seed: Option<u64>,
}

impl Unitary {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let dev = unitarity_deviation(&matrix);
        if matrix.nrows() != matrix.ncols() || dev > NORM_TOL {
            return Err(CircuitError::NotUnitary(dev));
        }
        Ok(Self { matrix, seed: None })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            seed: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            seed: self.seed,
        }
    }
}

/// `max |U†U − I|`.
pub fn unitarity_deviation(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let prod = m.adjoint() * m;
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    dev
}

/// Haar-random `d × d` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary(d: usize, seed: u64) -> Unitary {
    let mut rng = rng_from_seed(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = DMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    Unitary {
        matrix: q,
        seed: Some(seed),
    }
}

/// `U|ψ⟩` for a unitary on the whole register.
pub fn apply_global(u: &Unitary, state: &PureState) -> Result<PureState> {
    if u.dim() != state.dim() {
        return Err(CircuitError::DimMismatch {
            expected: u.dim(),
            found: state.dim(),
        });
    }
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    let out = &u.matrix * v;
    Ok(PureState::from_amplitudes_unchecked(
        state.num_qubits(),
        out.as_slice().to_vec(),
    ))
}

/// Applies one unitary to a batch of states as a single matrix product.
pub fn apply_global_batch(u: &Unitary, states: &[PureState]) -> Result<Vec<PureState>> {
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let d = u.dim();
    for s in states {
        if s.dim() != d {
            return Err(CircuitError::DimMismatch {
                expected: d,
                found: s.dim(),
            });
        }
    }
    let psi = DMatrix::from_fn(d, states.len(), |r, c| states[c].amplitudes()[r]);
    let out = &u.matrix * psi;
    Ok((0..states.len())
        .map(|c| PureState::from_amplitudes_unchecked(first.num_qubits(), out.column(c).iter().copied().collect()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrickPattern {
    /// One gate per layer on `(ℓ mod N, ℓ+1 mod N)`.
    #[default]
    Staircase,
    /// Even pairs on even layers, odd pairs on odd layers.
    DenseBrick,
}

impl BrickPattern {
    pub fn as_str(self) -> &'static str {
        match self {
            BrickPattern::Staircase => "staircase",
            BrickPattern::DenseBrick => "dense_brick",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub pair: (usize, usize),
    pub unitary: Unitary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    pub num_qubits: usize,
    pub pattern: BrickPattern,
    pub layers: Vec<Vec<Gate>>,
}

impl CircuitSpec {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// Pairs touched by layer `layer` of the given pattern.
pub fn layer_pairs(num_qubits: usize, layer: usize, pattern: BrickPattern) -> Vec<(usize, usize)> {
    let n = num_qubits;
    match pattern {
        BrickPattern::Staircase => vec![(layer % n, (layer + 1) % n)],
        BrickPattern::DenseBrick => {
            let mut pairs: Vec<_> = (layer % 2..n.saturating_sub(1))
                .step_by(2)
                .map(|i| (i, i + 1))
                .collect();
            // the wrap bond only fits without overlap on even rings
            if layer % 2 == 1 && n % 2 == 0 && n > 2 {
                pairs.push((n - 1, 0));
            }
            pairs
        }
    }
}

/// Random circuit of the given depth. Gate `g` of layer `ℓ` is drawn from
/// the sub-seed `(seed, "gate/ℓ/g")`, so a deeper circuit extends a shallower
/// one with the same seed.
pub fn brickwork(num_qubits: usize, depth: usize, seed: u64, pattern: BrickPattern) -> CircuitSpec {
    let layers = (0..depth)
        .map(|layer| {
            layer_pairs(num_qubits, layer, pattern)
                .into_iter()
                .enumerate()
                .map(|(g, pair)| Gate {
                    pair,
                    unitary: haar_unitary(4, derive_seed(seed, &format!("gate/{layer}/{g}"))),
                })
                .collect()
        })
        .collect();
    CircuitSpec {
        num_qubits,
        pattern,
        layers,
    }
}

/// Applies a 4×4 gate to qubits `(i, j)` in place. The gate's local basis is
/// `|q_i q_j⟩` with `q_i` as the high bit: `00, 01, 10, 11`.
pub fn apply_two_qubit_in_place(
    amps: &mut [Complex64],
    num_qubits: usize,
    gate: &DMatrix<Complex64>,
    pair: (usize, usize),
) -> Result<()> {
    let (i, j) = pair;
    if i == j || i >= num_qubits || j >= num_qubits {
        return Err(CircuitError::BadPair(i, j, num_qubits));
    }
    if gate.nrows() != 4 || gate.ncols() != 4 {
        return Err(CircuitError::DimMismatch {
            expected: 4,
            found: gate.nrows(),
        });
    }
    let (mi, mj) = (qubit_mask(i), qubit_mask(j));
    let g: [[Complex64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| gate[(r, c)]));
    for base in 0..amps.len() {
        if base & (mi | mj) != 0 {
            continue;
        }
        let idx = [base, base | mj, base | mi, base | mi | mj];
        let old = idx.map(|k| amps[k]);
        for (r, &k) in idx.iter().enumerate() {
            amps[k] = g[r][0] * old[0] + g[r][1] * old[1] + g[r][2] * old[2] + g[r][3] * old[3];
        }
    }
    Ok(())
}

pub fn apply_two_qubit(state: &PureState, gate: &Unitary, pair: (usize, usize)) -> Result<PureState> {
    let mut amps = state.amplitudes().to_vec();
    apply_two_qubit_in_place(&mut amps, state.num_qubits(), &gate.matrix, pair)?;
    Ok(PureState::from_amplitudes_unchecked(state.num_qubits(), amps))
}

fn check_circuit(circ: &CircuitSpec, state: &PureState) -> Result<()> {
    if circ.num_qubits != state.num_qubits() {
        return Err(CircuitError::DimMismatch {
            expected: circ.num_qubits,
            found: state.num_qubits(),
        });
    }
    Ok(())
}

pub fn apply_circuit(circ: &CircuitSpec, state: &PureState) -> Result<PureState> {
    check_circuit(circ, state)?;
    let mut amps = state.amplitudes().to_vec();
    for gate in circ.layers.iter().flatten() {
        apply_two_qubit_in_place(&mut amps, circ.num_qubits, &gate.unitary.matrix, gate.pair)?;
    }
    Ok(PureState::from_amplitudes_unchecked(state.num_qubits(), amps))
}

/// States after `0, 1, …, depth` layers, each built on the previous one.
pub fn apply_circuit_prefixes(circ: &CircuitSpec, state: &PureState) -> Result<Vec<PureState>> {
    check_circuit(circ, state)?;
    let mut out = Vec::with_capacity(circ.depth() + 1);
    out.push(state.clone());
    let mut amps = state.amplitudes().to_vec();
    for layer in &circ.layers {
        for gate in layer {
            apply_two_qubit_in_place(&mut amps, circ.num_qubits, &gate.unitary.matrix, gate.pair)?;
        }
        out.push(PureState::from_amplitudes_unchecked(state.num_qubits(), amps.clone()));
    }
    Ok(out)
}
