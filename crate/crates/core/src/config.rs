//! Experiment configuration, read from TOML. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/mnist-n6"
//!
//! [dataset]
//! name = "mnist"
//! train = 10000
//! test = 2000
//!
//! [reduction]
//! method = "pca"
//!
//! [reservoir]
//! kind = "xx_hamiltonian"
//! qubits = 6
//! coupling = 0.5
//! boundary = "periodic"
//! times = [0.05, 0.5, 1.0, 2.0, 5.0]
//!
//! [features]
//! kind = "probabilities"
//! shots = 0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::InitialStatePolicy;
use crate::classifier::TrainConfig;
use crate::dataset::DatasetKind;
use crate::features::FeatureKind;
use crate::hamiltonian::Boundary;
use crate::qcore::EncodingOptions;
use crate::randcirc::BrickPattern;
use crate::reduce::{AeConfig, ReduceMethod};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration file: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Geometric grid from 0.05 to 5 with 25 points.
pub fn default_times() -> Vec<f64> {
    geometric_grid(0.05, 5.0, 25)
}

pub fn geometric_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![start];
    }
    let ratio = (stop / start).powf(1.0 / (points - 1) as f64);
    let mut grid: Vec<f64> = (0..points).map(|i| start * ratio.powi(i as i32)).collect();
    grid[points - 1] = stop;
    grid
}

pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetKind,
    pub train: usize,
    pub test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: DatasetKind::Mnist,
            train: 1000,
            test: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionConfig {
    pub method: ReduceMethod,
    /// Defaults to twice the qubit count.
    pub latent_dim: Option<usize>,
    pub autoencoder: AeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReservoirKind {
    #[default]
    XxHamiltonian,
    Haar,
    Brickwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirConfig {
    pub kind: ReservoirKind,
    pub qubits: usize,
    pub coupling: f64,
    pub boundary: Boundary,
    pub times: Vec<f64>,
    pub haar_samples: usize,
    /// Explicit per-draw seeds; derived from the master seed when absent.
    pub haar_seeds: Option<Vec<u64>>,
    pub depths: Vec<usize>,
    pub pattern: BrickPattern,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            kind: ReservoirKind::XxHamiltonian,
            qubits: 6,
            coupling: 0.5,
            boundary: Boundary::Periodic,
            times: default_times(),
            haar_samples: 10,
            haar_seeds: None,
            depths: (0..=8).collect(),
            pattern: BrickPattern::Staircase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// 0 means exact probabilities.
    pub shots: u64,
    /// Per-feature z-score fitted on the training split.
    pub standardize: bool,
    pub encoding: EncodingOptions,
    /// Keep feature tables in the cache directory.
    pub cache: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Probabilities,
            shots: 0,
            standardize: false,
            encoding: EncodingOptions::default(),
            cache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub entropy: bool,
    pub sizes: Vec<usize>,
    pub entropy_times: Vec<f64>,
    pub policy: InitialStatePolicy,
    pub entropy_samples: usize,
    pub clusters: bool,
    pub cluster_k: usize,
    pub cluster_times: Vec<f64>,
    pub lr: bool,
    pub lr_sites: usize,
    pub lr_times: Vec<f64>,
    pub eigenbasis: bool,
    pub mub: bool,
    pub plots: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            entropy: true,
            sizes: vec![6, 8, 10],
            entropy_times: uniform_grid(0.0, 15.0, 0.05),
            policy: InitialStatePolicy::Encoded,
            entropy_samples: 20,
            clusters: true,
            cluster_k: 10,
            cluster_times: vec![0.1, 0.3, 0.5, 1.0, 2.0, 3.0, 5.0],
            lr: true,
            lr_sites: 40,
            lr_times: uniform_grid(0.0, 5.0, 0.25),
            eigenbasis: true,
            mub: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data_dir: None,
            cache_dir: None,
            dataset: DatasetConfig::default(),
            reduction: ReductionConfig::default(),
            reservoir: ReservoirConfig::default(),
            features: FeatureConfig::default(),
            classifier: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

fn ascending<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn qubits(&self) -> usize {
        self.reservoir.qubits
    }

    pub fn latent_dim(&self) -> usize {
        self.reduction.latent_dim.unwrap_or(2 * self.reservoir.qubits)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let n = self.reservoir.qubits;
        if n == 0 {
            return bad("reservoir.qubits must be positive".into());
        }
        let k = self.latent_dim();
        if k % 2 != 0 || k != 2 * n {
            return bad(format!("latent_dim {k} must be even and equal 2 × qubits = {}", 2 * n));
        }
        if !ascending(&self.reservoir.times) || self.reservoir.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("reservoir.times must be ascending, finite and non-negative".into());
        }
        if !ascending(&self.reservoir.depths) {
            return bad("reservoir.depths must be ascending".into());
        }
        if !(self.reservoir.coupling.is_finite() && self.reservoir.coupling != 0.0) {
            return bad("reservoir.coupling must be finite and non-zero".into());
        }
        if self.reservoir.kind == ReservoirKind::Haar {
            let draws = self.haar_seeds().len();
            if draws < 2 {
                return bad("the Haar baseline needs at least two draws".into());
            }
        }
        if self.dataset.train == 0 || self.dataset.test == 0 {
            return bad("dataset.train and dataset.test must be positive".into());
        }
        if !ascending(&self.analysis.entropy_times) || !ascending(&self.analysis.lr_times) {
            return bad("analysis time grids must be ascending".into());
        }
        if !ascending(&self.analysis.cluster_times) {
            return bad("analysis.cluster_times must be ascending".into());
        }
        if self.analysis.entropy && self.analysis.sizes.iter().any(|s| s % 2 != 0 || *s == 0) {
            return bad("analysis.sizes must be even".into());
        }
        Ok(())
    }

    /// Seeds of the Haar draws: explicit ones if given, else one per sample
    /// derived from the master seed.
    pub fn haar_seeds(&self) -> Vec<u64> {
        match &self.reservoir.haar_seeds {
            Some(s) => s.clone(),
            None => (0..self.reservoir.haar_samples)
                .map(|i| crate::seed::derive_seed(self.seed, &format!("haar/{i}")))
                .collect(),
        }
    }
}
