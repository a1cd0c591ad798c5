//! Classical feature vectors read out of evolved states.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::hamiltonian::SpectralDecomposition;
use crate::qcore::{pauli_expectations, probability_vector, sample_shots, z_expectations, PureState};
use crate::randcirc::unitarity_deviation;

const CACHE_MAGIC: &[u8; 8] = b"QELMFEAT";

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("basis matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("feature cache: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `2^N` computational-basis probabilities.
    #[default]
    Probabilities,
    /// `3N` single-site `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
    LocalPaulis,
    /// `N` single-site `⟨σz⟩`.
    LocalZ,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Probabilities => "probabilities",
            FeatureKind::LocalPaulis => "local_paulis",
            FeatureKind::LocalZ => "local_z",
        }
    }

    pub fn dim(self, num_qubits: usize) -> usize {
        match self {
            FeatureKind::Probabilities => 1 << num_qubits,
            FeatureKind::LocalPaulis => 3 * num_qubits,
            FeatureKind::LocalZ => num_qubits,
        }
    }

    fn code(self) -> u8 {
        match self {
            FeatureKind::Probabilities => 0,
            FeatureKind::LocalPaulis => 1,
            FeatureKind::LocalZ => 2,
        }
    }

    fn from_code(code: u8) -> std::io::Result<Self> {
        match code {
            0 => Ok(FeatureKind::Probabilities),
            1 => Ok(FeatureKind::LocalPaulis),
            2 => Ok(FeatureKind::LocalZ),
            _ => Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unknown feature kind {code}"),
            )),
        }
    }
}

/// Feature vector of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub features: Vec<f64>,
    pub label: usize,
    pub sample_id: usize,
    /// Evolution time or circuit depth this record was taken at.
    pub tag: f64,
}

/// Computational-basis probabilities; with `shots > 0` they are replaced by
/// the frequencies of that many simulated measurements.
pub fn prob_features(state: &PureState, shots: u64, seed: u64) -> Vec<f64> {
    let p = probability_vector(state);
    if shots == 0 {
        p
    } else {
        sample_shots(&p, shots, seed)
    }
}

pub fn local_features(state: &PureState) -> Vec<f64> {
    pauli_expectations(state)
}

/// Extracts features of the requested kind.
pub fn extract(state: &PureState, kind: FeatureKind, shots: u64, seed: u64) -> Vec<f64> {
    match kind {
        FeatureKind::Probabilities => prob_features(state, shots, seed),
        FeatureKind::LocalPaulis => local_features(state),
        FeatureKind::LocalZ => z_expectations(state),
    }
}

/// A set of records sharing one feature dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub num_qubits: usize,
    pub kind: FeatureKind,
    pub tag: f64,
    dim: usize,
    rows: Vec<f64>,
    labels: Vec<usize>,
    sample_ids: Vec<usize>,
}

impl FeatureTable {
    pub fn new(num_qubits: usize, kind: FeatureKind, tag: f64, dim: usize) -> Self {
        Self {
            num_qubits,
            kind,
            tag,
            dim,
            rows: Vec::new(),
            labels: Vec::new(),
            sample_ids: Vec::new(),
        }
    }

    /// Builds a table straight from raw rows (used by tests and toy fixtures).
    pub fn from_rows(dim: usize, rows: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != dim * labels.len() {
            return Err(FeatureError::DimMismatch {
                expected: dim * labels.len(),
                found: rows.len(),
            });
        }
        let n = labels.len();
        Ok(Self {
            num_qubits: 0,
            kind: FeatureKind::Probabilities,
            tag: 0.0,
            dim,
            rows,
            labels,
            sample_ids: (0..n).collect(),
        })
    }

    pub fn push(&mut self, features: &[f64], label: usize, sample_id: usize) -> Result<()> {
        if features.len() != self.dim {
            return Err(FeatureError::DimMismatch {
                expected: self.dim,
                found: features.len(),
            });
        }
        self.rows.extend_from_slice(features);
        self.labels.push(label);
        self.sample_ids.push(sample_id);
        Ok(())
    }

    /// Extracts features from each state; `labels` and `ids` are parallel to `states`.
    pub fn from_states(
        states: &[PureState],
        labels: &[usize],
        ids: &[usize],
        kind: FeatureKind,
        tag: f64,
        shots: u64,
        seed: u64,
    ) -> Self {
        let num_qubits = states.first().map_or(0, PureState::num_qubits);
        let dim = kind.dim(num_qubits);
        let mut table = Self::new(num_qubits, kind, tag, dim);
        table.rows.reserve(states.len() * dim);
        for ((s, &l), &id) in states.iter().zip(labels).zip(ids) {
            let shot_seed = crate::seed::derive_seed(seed, &format!("shots/{id}"));
            table.rows.extend(extract(s, kind, shots, shot_seed));
            table.labels.push(l);
            table.sample_ids.push(id);
        }
        table
    }

    pub fn from_records(records: &[FeatureRecord]) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.features.len());
        let mut t = Self::new(0, FeatureKind::Probabilities, records.first().map_or(0.0, |r| r.tag), dim);
        for r in records {
            t.push(&r.features, r.label, r.sample_id)?;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn record(&self, i: usize) -> FeatureRecord {
        FeatureRecord {
            features: self.row(i).to_vec(),
            label: self.labels[i],
            sample_id: self.sample_ids[i],
            tag: self.tag,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = FeatureRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut t = Self::new(self.num_qubits, self.kind, self.tag, self.dim);
        for &i in order {
            t.rows.extend_from_slice(self.row(i));
            t.labels.push(self.labels[i]);
            t.sample_ids.push(self.sample_ids[i]);
        }
        t
    }

    /// Applies `f` to every row in place.
    pub fn map_rows(&mut self, mut f: impl FnMut(&mut [f64])) {
        for row in self.rows.chunks_exact_mut(self.dim.max(1)) {
            f(row);
        }
    }

    /// Header `(N, kind, tag, count, dim)`, row-major `f64` payload, `u32`
    /// labels, then `u64` sample ids. All little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = FeatureCacheWriter::create(path, self.num_qubits, self.kind, self.tag, self.dim)?;
        for i in 0..self.len() {
            w.write_row(self.row(i), self.labels[i], self.sample_ids[i])?;
        }
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        binio::read_header(&mut r, CACHE_MAGIC)?;
        let num_qubits = binio::read_u32(&mut r)? as usize;
        let kind = FeatureKind::from_code(binio::read_u8(&mut r)?)?;
        let tag = binio::read_f64(&mut r)?;
        let count = binio::read_u64(&mut r)? as usize;
        let dim = binio::read_u64(&mut r)? as usize;
        let rows = binio::read_f64s(&mut r, count * dim)?;
        let labels = (0..count)
            .map(|_| binio::read_u32(&mut r).map(|l| l as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let sample_ids = (0..count)
            .map(|_| binio::read_u64(&mut r).map(|l| l as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        Ok(Self {
            num_qubits,
            kind,
            tag,
            dim,
            rows,
            labels,
            sample_ids,
        })
    }
}

/// Streams feature rows to disk in sample order; labels and ids are buffered
/// (they are small) and written by [`FeatureCacheWriter::finish`], which also
/// patches the row count into the header.
pub struct FeatureCacheWriter {
    w: BufWriter<File>,
    count_offset: u64,
    dim: usize,
    labels: Vec<u32>,
    ids: Vec<u64>,
}

impl FeatureCacheWriter {
    pub fn create(path: impl AsRef<Path>, num_qubits: usize, kind: FeatureKind, tag: f64, dim: usize) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        binio::write_header(&mut w, CACHE_MAGIC)?;
        binio::write_u32(&mut w, num_qubits as u32)?;
        binio::write_u8(&mut w, kind.code())?;
        binio::write_f64(&mut w, tag)?;
        let count_offset = 8 + 4 + 4 + 1 + 8;
        binio::write_u64(&mut w, 0)?;
        binio::write_u64(&mut w, dim as u64)?;
        Ok(Self {
            w,
            count_offset,
            dim,
            labels: Vec::new(),
            ids: Vec::new(),
        })
    }

    pub fn write_row(&mut self, features: &[f64], label: usize, sample_id: usize) -> Result<()> {
        if features.len() != self.dim {
            return Err(FeatureError::DimMismatch {
                expected: self.dim,
                found: features.len(),
            });
        }
        binio::write_f64s(&mut self.w, features)?;
        self.labels.push(label as u32);
        self.ids.push(sample_id as u64);
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        for &l in &self.labels {
            binio::write_u32(&mut self.w, l)?;
        }
        for &id in &self.ids {
            binio::write_u64(&mut self.w, id)?;
        }
        self.w.seek(SeekFrom::Start(self.count_offset))?;
        binio::write_u64(&mut self.w, self.labels.len() as u64)?;
        self.w.flush()?;
        Ok(())
    }
}

/// Orthonormal measurement basis; column `k` is `|s_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis {
    matrix: DMatrix<Complex64>,
}

impl MeasurementBasis {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let dev = unitarity_deviation(&matrix);
        if dev > 1e-10 {
            return Err(FeatureError::NotUnitary(dev));
        }
        Ok(Self { matrix })
    }

    pub fn computational(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
        }
    }

    /// Discrete Fourier basis `F_{jk} = ω^{jk}/√d`.
    pub fn fourier(d: usize) -> Self {
        let norm = 1.0 / (d as f64).sqrt();
        let matrix = DMatrix::from_fn(d, d, |j, k| {
            let angle = 2.0 * std::f64::consts::PI * ((j * k) % d) as f64 / d as f64;
            Complex64::from_polar(norm, angle)
        });
        Self { matrix }
    }

    /// Eigenbasis of the chain, columns in eigenvalue order.
    pub fn eigenbasis(dec: &SpectralDecomposition) -> Self {
        Self {
            matrix: dec.eigenvector_matrix().map(|x| Complex64::new(x, 0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }
}

/// `p_k = |⟨s_k|ψ⟩|²`.
pub fn measure_in_basis(state: &PureState, basis: &MeasurementBasis) -> Result<Vec<f64>> {
    if basis.dim() != state.dim() {
        return Err(FeatureError::DimMismatch {
            expected: basis.dim(),
            found: state.dim(),
        });
    }
    let amps = state.amplitudes();
    Ok((0..basis.dim())
        .map(|k| {
            basis
                .matrix
                .column(k)
                .iter()
                .zip(amps)
                .map(|(s, a)| s.conj() * a)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect())
}

/// `max_{k,n} | |⟨a_k|b_n⟩|² − 1/d |`; zero exactly for mutually unbiased bases.
pub fn mub_deviation(a: &MeasurementBasis, b: &MeasurementBasis) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let d = a.dim() as f64;
    let overlaps = a.matrix.adjoint() * &b.matrix;
    Ok(overlaps.iter().map(|o| (o.norm_sqr() - 1.0 / d).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    use crate::hamiltonian::{spectral, HamiltonianSpec};
    use crate::qcore::encode_dense_angle;

    #[test]
    fn probability_and_local_records() {
        let zero = PureState::basis(3, 0);
        let mut onehot = vec![0.0; 8];
        onehot[0] = 1.0;
        assert_eq!(prob_features(&zero, 0, 0), onehot);
        assert_eq!(local_features(&zero), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);

        let uniform = encode_dense_angle(&[PI / 2.0, 0.0, PI / 2.0, 0.0], Default::default()).unwrap();
        for p in prob_features(&uniform, 0, 0) {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }
        assert_eq!(prob_features(&uniform, 0, 0), probability_vector(&uniform));
    }

    #[test]
    fn bell_pair_has_no_local_polarization() {
        let h = FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        let mut amps = vec![z; 8];
        amps[0] = Complex64::new(h, 0.0);
        amps[3] = Complex64::new(h, 0.0);
        let s = PureState::from_amplitudes(amps).unwrap();
        let f = local_features(&s);
        for v in &f[..6] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(f[8], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn computational_and_fourier_measurements() {
        let s = encode_dense_angle(&[0.4, 1.3, 2.2, 0.7], Default::default()).unwrap();
        let p = measure_in_basis(&s, &MeasurementBasis::computational(4)).unwrap();
        for (a, b) in p.iter().zip(probability_vector(&s)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let p = measure_in_basis(&PureState::basis(1, 0), &MeasurementBasis::fourier(2)).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
        assert!(matches!(
            measure_in_basis(&s, &MeasurementBasis::fourier(2)),
            Err(FeatureError::DimMismatch { .. })
        ));
    }

    #[test]
    fn mub_values() {
        for d in [2, 4, 8] {
            let dev = mub_deviation(&MeasurementBasis::computational(d), &MeasurementBasis::fourier(d)).unwrap();
            assert!(dev < 1e-12);
            let own = mub_deviation(&MeasurementBasis::fourier(d), &MeasurementBasis::fourier(d)).unwrap();
            assert_abs_diff_eq!(own, 1.0 - 1.0 / d as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn xx_eigenbasis_vs_computational_two_sites() {
        // N=2 open: eigenvectors |00⟩, |11⟩ and (|01⟩ ± |10⟩)/√2, so the
        // largest deviation comes from the product eigenstates: 1 - 1/4.
        let dec = spectral(&HamiltonianSpec::new(2, 0.5, crate::hamiltonian::Boundary::Open).unwrap()).unwrap();
        let dev = mub_deviation(&MeasurementBasis::computational(4), &MeasurementBasis::eigenbasis(&dec)).unwrap();
        assert_abs_diff_eq!(dev, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn eigenbasis_probabilities_are_static() {
        let dec = spectral(&HamiltonianSpec::periodic(4).unwrap()).unwrap();
        let basis = MeasurementBasis::eigenbasis(&dec);
        let s = encode_dense_angle(&[0.4, 1.3, 2.2, 0.7, 1.0, 0.2, 2.9, 1.9], Default::default()).unwrap();
        let p0 = measure_in_basis(&s, &basis).unwrap();
        for t in [0.5, 1.7, 4.0] {
            let pt = measure_in_basis(&dec.evolve(&s, t).unwrap(), &basis).unwrap();
            let dev = p0.iter().zip(&pt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-10);
        }
    }

    #[test]
    fn cache_roundtrip_and_stream() {
        let dir = tempfile::tempdir().unwrap();
        let states: Vec<_> = (0..5)
            .map(|i| encode_dense_angle(&[0.1 * i as f64, 1.0, 2.0, 0.3], Default::default()).unwrap())
            .collect();
        let table = FeatureTable::from_states(&states, &[0, 1, 2, 1, 0], &[10, 11, 12, 13, 14], FeatureKind::Probabilities, 0.5, 0, 0);
        let path = dir.path().join("f.bin");
        table.save(&path).unwrap();
        assert_eq!(FeatureTable::load(&path).unwrap(), table);

        let local = FeatureTable::from_states(&states, &[0; 5], &[0, 1, 2, 3, 4], FeatureKind::LocalPaulis, 1.0, 0, 0);
        assert_eq!(local.dim(), 6);
        assert!(local.rows().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn finite_shots_are_recorded_frequencies() {
        let s = encode_dense_angle(&[1.0, 0.0, 2.0, 0.0], Default::default()).unwrap();
        let f = prob_features(&s, 64, 3);
        assert!(f.iter().all(|v| (v * 64.0).fract() == 0.0));
        assert_eq!(f, prob_features(&s, 64, 3));
    }
}
