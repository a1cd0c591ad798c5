//! Python bindings: state encoding, XX-chain evolution, random circuits,
//! the output classifier, analysis helpers and full pipeline runs.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qelm::analysis;
use qelm::classifier::{self, TrainConfig};
use qelm::config::ExperimentConfig;
use qelm::features::{FeatureKind, FeatureTable};
use qelm::hamiltonian::{spectral, Boundary, HamiltonianSpec, SpectralDecomposition};
use qelm::pipeline::{self, Command};
use qelm::qcore::{self, EncodingOptions, PureState};
use qelm::randcirc::{self, BrickPattern};
use qelm::Complex64;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn state(amps: Vec<Complex64>) -> PyResult<PureState> {
    PureState::from_amplitudes(amps).map_err(err)
}

fn parse<T: serde::de::DeserializeOwned>(s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(err)
}

fn to_python(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Dense-angle product state: angles `(θ_1, φ_1, θ_2, φ_2, …)`.
#[pyfunction]
#[pyo3(signature = (angles, stretch_phi = false))]
fn encode(angles: Vec<f64>, stretch_phi: bool) -> PyResult<Vec<Complex64>> {
    let opts = EncodingOptions {
        stretch_phi,
        ..Default::default()
    };
    Ok(qcore::encode_dense_angle(&angles, opts).map_err(err)?.into_amplitudes())
}

#[pyfunction]
fn probabilities(amplitudes: Vec<Complex64>) -> PyResult<Vec<f64>> {
    Ok(qcore::probability_vector(&state(amplitudes)?))
}

/// Von Neumann entropy (natural log) of the qubits in `keep`.
#[pyfunction]
fn entropy(amplitudes: Vec<Complex64>, keep: Vec<usize>) -> PyResult<f64> {
    qcore::subsystem_entropy(&state(amplitudes)?, &keep).map_err(err)
}

/// Single-site `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` for every qubit, flattened.
#[pyfunction]
fn pauli_expectations(amplitudes: Vec<Complex64>) -> PyResult<Vec<f64>> {
    Ok(qcore::pauli_expectations(&state(amplitudes)?))
}

/// XX spin chain, diagonalized once and evolved exactly.
#[pyclass]
struct XXChain {
    dec: SpectralDecomposition,
}

#[pymethods]
impl XXChain {
    #[new]
    #[pyo3(signature = (num_qubits, coupling = 0.5, boundary = "periodic"))]
    fn new(num_qubits: usize, coupling: f64, boundary: &str) -> PyResult<Self> {
        let boundary: Boundary = parse(boundary)?;
        let spec = HamiltonianSpec::new(num_qubits, coupling, boundary).map_err(err)?;
        Ok(Self {
            dec: spectral(&spec).map_err(err)?,
        })
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.dec.num_qubits()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.dec.eigenvalues()
    }

    fn evolve(&self, amplitudes: Vec<Complex64>, t: f64) -> PyResult<Vec<Complex64>> {
        Ok(self.dec.evolve(&state(amplitudes)?, t).map_err(err)?.into_amplitudes())
    }

    /// Half-chain and single-qubit entropy curves averaged over `states`.
    fn entropy_curve(&self, states: Vec<Vec<Complex64>>, times: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let states = states.into_iter().map(state).collect::<PyResult<Vec<_>>>()?;
        let c = analysis::entropy_curve(&self.dec, &states, &times).map_err(err)?;
        Ok((c.half, c.single))
    }
}

/// Haar-random unitary as a list of rows.
#[pyfunction]
fn haar_unitary(dim: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let u = randcirc::haar_unitary(dim, seed);
    u.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Applies `depth` layers of a random two-qubit gate circuit.
#[pyfunction]
#[pyo3(signature = (amplitudes, depth, seed, pattern = "staircase"))]
fn brickwork(amplitudes: Vec<Complex64>, depth: usize, seed: u64, pattern: &str) -> PyResult<Vec<Complex64>> {
    let psi = state(amplitudes)?;
    let pattern: BrickPattern = parse(pattern)?;
    let circuit = randcirc::brickwork(psi.num_qubits(), depth, seed, pattern);
    Ok(randcirc::apply_circuit(&circuit, &psi).map_err(err)?.into_amplitudes())
}

/// Softmax output layer trained with Adam.
#[pyclass]
struct Onn {
    model: classifier::OnnModel,
    #[pyo3(get)]
    epoch_losses: Vec<f64>,
}

fn table(features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<FeatureTable> {
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("feature rows differ in length"));
    }
    FeatureTable::from_rows(dim, features.concat(), labels).map_err(err)
}

#[pymethods]
impl Onn {
    #[staticmethod]
    #[pyo3(signature = (features, labels, epochs = 30, learning_rate = 1e-3, batch_size = 32, seed = 0))]
    fn fit(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            ..Default::default()
        };
        let out = classifier::train(&table(features, labels)?, &cfg, seed).map_err(err)?;
        Ok(Self {
            model: out.model,
            epoch_losses: out.epoch_losses,
        })
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<usize> {
        if features.len() != self.model.dim {
            return Err(PyValueError::new_err("feature length does not match the model"));
        }
        Ok(self.model.predict(&features))
    }

    fn predict_proba(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.softmax_forward(&features).map_err(err)
    }

    fn accuracy(&self, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        classifier::accuracy(&self.model, &table(features, labels)?).map_err(err)
    }
}

/// Measurement features of many states: `probabilities`, `local_paulis` or `local_z`.
#[pyfunction]
#[pyo3(signature = (states, kind = "probabilities", shots = 0, seed = 0))]
fn features(states: Vec<Vec<Complex64>>, kind: &str, shots: u64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let kind: FeatureKind = parse(kind)?;
    states
        .into_iter()
        .enumerate()
        .map(|(i, a)| Ok(qelm::features::extract(&state(a)?, kind, shots, seed.wrapping_add(i as u64))))
        .collect()
}

/// Returns `(assignments, inertia)`.
#[pyfunction]
#[pyo3(signature = (points, k, seed = 0, max_iters = 300))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64, max_iters: usize) -> PyResult<(Vec<usize>, f64)> {
    let dim = points.first().map_or(0, Vec::len);
    let c = analysis::kmeans(&points.concat(), dim, k, seed, max_iters).map_err(err)?;
    Ok((c.assignments, c.inertia))
}

#[pyfunction]
fn adjusted_rand_index(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    analysis::adjusted_rand_index(&pred, &truth).map_err(err)
}

#[pyfunction]
fn bessel_j(n: i32, x: f64) -> PyResult<f64> {
    analysis::bessel_j(n, x).map_err(err)
}

/// Runs `time-sweep`, `haar-baseline`, `depth-sweep` or `analyze` from a
/// TOML configuration and returns the run record as a dict.
#[pyfunction]
fn run(py: Python<'_>, command: &str, config_toml: &str) -> PyResult<Py<PyAny>> {
    let command: Command = parse(command)?;
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(err)?;
    let record = py.detach(|| pipeline::run(command, &cfg)).map_err(err)?;
    to_python(py, &record)
}

/// Re-executes a recorded run; returns `{file: identical}`.
#[pyfunction]
#[pyo3(signature = (record, output_dir = None))]
fn repro(py: Python<'_>, record: std::path::PathBuf, output_dir: Option<std::path::PathBuf>) -> PyResult<Py<PyAny>> {
    let rep = py.detach(|| pipeline::repro(&record, output_dir)).map_err(err)?;
    let files: std::collections::BTreeMap<_, _> = rep.files.into_iter().collect();
    to_python(py, &files)
}

#[pymodule]
fn qelm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<XXChain>()?;
    m.add_class::<Onn>()?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(pauli_expectations, m)?)?;
    m.add_function(wrap_pyfunction!(haar_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(brickwork, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_j, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(repro, m)?)?;
    Ok(())
}
