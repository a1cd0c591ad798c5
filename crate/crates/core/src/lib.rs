//! Quantum extreme learning machine laboratory.
//!
//! The crate simulates the complete QELM pipeline on a classical machine:
//!
//! 1. images are parsed ([`dataset`]) and compressed to `2N` features ([`reduce`]),
//! 2. each feature pair sets the Bloch angles of one qubit ([`qcore`]),
//! 3. the register evolves under the XX spin chain ([`hamiltonian`]) or a random
//!    unitary / two-qubit gate circuit ([`randcirc`]),
//! 4. measurement statistics ([`features`]) feed a softmax output layer
//!    trained with Adam ([`classifier`]).
//!
//! [`analysis`] holds the diagnostics used to explain the accuracy curves
//! (entanglement growth, clustering in probability space, light cones), and
//! [`pipeline`] ties everything into reproducible sweeps driven by an
//! [`config::ExperimentConfig`].
//!
//! Bit convention used everywhere: qubit `i` is bit `i` of a basis index
//! (`index & (1 << i)`), so qubit 0 is the least significant bit. Kets are
//! written left to right starting with qubit 0: `|01⟩` on two qubits means
//! qubit 0 in `|0⟩`, qubit 1 in `|1⟩`, i.e. basis index 2.

pub mod analysis;
pub mod binio;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod features;
pub mod hamiltonian;
pub mod pipeline;
pub mod plot;
pub mod qcore;
pub mod randcirc;
pub mod reduce;
pub mod seed;

pub use num_complex::Complex64;

/// Errors surfaced by the pipeline, one variant per stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Reduce(#[from] reduce::ReduceError),
    #[error(transparent)]
    State(#[from] qcore::StateError),
    #[error(transparent)]
    Hamiltonian(#[from] hamiltonian::HamiltonianError),
    #[error(transparent)]
    Circuit(#[from] randcirc::CircuitError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{stage} failed at point {point}: {source}")]
    AtPoint {
        stage: &'static str,
        point: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
