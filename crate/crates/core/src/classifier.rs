//! One-layer softmax classifier trained with Adam on categorical
//! cross-entropy. This is the only trained part of the pipeline.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::features::FeatureTable;
use crate::seed::labeled_rng;

const MODEL_MAGIC: &[u8; 8] = b"QELMONN1";
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("training set needs at least two classes, found {0}")]
    EmptyTrainingSet(usize),
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop once the epoch loss improved by less than `min_delta` over this
    /// many epochs. Zero disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            patience: 5,
            min_delta: 1e-5,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// `softmax(z)` with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `-ln p_true`, with `p` floored at `1e-12`.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Output layer `softmax(W x + b)`; `W` is stored row-major, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct OnnModel {
    pub num_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl OnnModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(ClassifierError::DimMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim.max(1))
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect()
    }

    pub fn softmax_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(softmax(&self.logits(x)))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let nw = self.weights.len();
        self.weights.copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        binio::write_header(&mut w, MODEL_MAGIC)?;
        binio::write_u32(&mut w, self.num_classes as u32)?;
        binio::write_u32(&mut w, self.dim as u32)?;
        binio::write_f64s(&mut w, &self.weights)?;
        binio::write_f64s(&mut w, &self.bias)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        binio::read_header(&mut r, MODEL_MAGIC)?;
        let num_classes = binio::read_u32(&mut r)? as usize;
        let dim = binio::read_u32(&mut r)? as usize;
        let weights = binio::read_f64s(&mut r, num_classes * dim)?;
        let bias = binio::read_f64s(&mut r, num_classes)?;
        Ok(Self {
            num_classes,
            dim,
            weights,
            bias,
        })
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `rows` and its gradient, flattened as `[W, b]`.
/// The gradient of one sample is `(softmax(Wx+b) − onehot) ⊗ [x, 1]`.
pub fn loss_and_gradient(model: &OnnModel, data: &FeatureTable, rows: &[usize]) -> (f64, Vec<f64>) {
    let (c, d) = (model.num_classes, model.dim);
    let mut grad = vec![0.0; c * d + c];
    let mut loss = 0.0;
    for &i in rows {
        let x = data.row(i);
        let label = data.labels()[i];
        let mut p = softmax(&model.logits(x));
        loss += cross_entropy(&p, label);
        p[label] -= 1.0;
        for (k, &dk) in p.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            let g = &mut grad[k * d..(k + 1) * d];
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += dk * xj;
            }
            grad[c * d + k] += dk;
        }
    }
    let n = rows.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

pub fn mean_loss(model: &OnnModel, data: &FeatureTable) -> f64 {
    let total: f64 = (0..data.len())
        .map(|i| cross_entropy(&softmax(&model.logits(data.row(i))), data.labels()[i]))
        .sum();
    total / data.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: OnnModel,
    /// Full-set mean loss after each completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam from a zero-initialized layer. Records are first put in
/// sample-id order and then shuffled by `seed`, so the visiting order does
/// not depend on how the input table happens to be ordered.
pub fn train(data: &FeatureTable, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut present: Vec<usize> = data.labels().to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(ClassifierError::EmptyTrainingSet(present.len()));
    }
    let num_classes = present.last().unwrap() + 1;
    let mut model = OnnModel::zeros(num_classes, data.dim());
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());

    let mut canonical: Vec<usize> = (0..data.len()).collect();
    canonical.sort_by_key(|&i| data.sample_ids()[i]);
    let mut rng = labeled_rng(seed, "onn/shuffle");
    let mut losses: Vec<f64> = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = canonical.clone();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_gradient(&model, data, batch);
            adam_step(&mut params, &grad, &mut adam, cfg);
            model.set_params(&params);
        }
        let loss = mean_loss(&model, data);
        if !loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss(epoch));
        }
        losses.push(loss);
        if cfg.patience > 0 && losses.len() > cfg.patience {
            let before = losses[losses.len() - 1 - cfg.patience];
            if before - loss < cfg.min_delta {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        epoch_losses: losses,
    })
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(model: &OnnModel, data: &FeatureTable) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    model.check(data.dim())?;
    let correct = (0..data.len())
        .filter(|&i| model.predict(data.row(i)) == data.labels()[i])
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Per-feature z-score fitted on a training table.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &FeatureTable) -> Self {
        let d = data.dim();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, data: &mut FeatureTable) {
        data.map_rows(|row| {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) / s;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_values() {
        let m = OnnModel::zeros(10, 3);
        for p in m.softmax_forward(&[0.3, 0.1, 0.2]).unwrap() {
            assert_abs_diff_eq!(p, 0.1, epsilon = 1e-15);
        }
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(p[0], 0.090031, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], 0.244728, epsilon = 1e-6);
        assert_abs_diff_eq!(p[2], 0.665241, epsilon = 1e-6);
        let q = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in p.iter().zip(&q) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            m.softmax_forward(&[1.0]),
            Err(ClassifierError::DimMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert_abs_diff_eq!(cross_entropy(&[0.1; 10], 4), 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(cross_entropy(&[0.7, 0.3], 1), 1.203973, epsilon = 1e-6);
        assert_abs_diff_eq!(cross_entropy(&[1.0, 0.0], 1), -(1e-12f64).ln(), epsilon = 1e-9);
    }

    #[test]
    fn adam_cases() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.5, -0.2];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &cfg);
        assert_eq!(p, vec![0.5, -0.2]);

        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, &cfg);
        // m̂ = 1, v̂ = 1: step is lr / (1 + eps)
        assert_abs_diff_eq!(p[0], 1.0 - 0.001 / (1.0 + 1e-7), epsilon = 1e-15);

        let mut a = vec![0.3, 0.7];
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(2), AdamState::new(2));
        adam_step(&mut a, &[0.2, -1.0], &mut sa, &cfg);
        adam_step(&mut b, &[0.2, -1.0], &mut sb, &cfg);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    fn toy() -> FeatureTable {
        // two separable blobs in 2-D
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let f = i as f64 / 40.0;
            if i % 2 == 0 {
                rows.extend_from_slice(&[1.0 + f, 0.5 - f]);
                labels.push(0);
            } else {
                rows.extend_from_slice(&[-1.0 - f, 0.2 + f]);
                labels.push(1);
            }
        }
        FeatureTable::from_rows(2, rows, labels).unwrap()
    }

    #[test]
    fn separable_toy_is_learned() {
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 8,
            patience: 0,
            ..Default::default()
        };
        let out = train(&toy(), &cfg, 1).unwrap();
        assert_eq!(accuracy(&out.model, &toy()).unwrap(), 1.0);
    }

    #[test]
    fn one_class_is_rejected() {
        let t = FeatureTable::from_rows(1, vec![1.0, 2.0], vec![3, 3]).unwrap();
        assert!(matches!(
            train(&t, &TrainConfig::default(), 0),
            Err(ClassifierError::EmptyTrainingSet(1))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&toy(), &TrainConfig::default(), 5).unwrap();
        let b = train(&toy(), &TrainConfig::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn accuracy_cases() {
        // hand-built weights: predicts class = index of the larger coordinate
        let model = OnnModel {
            num_classes: 2,
            dim: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        };
        let t = FeatureTable::from_rows(2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 1.0], vec![0, 1, 1]).unwrap();
        assert_abs_diff_eq!(accuracy(&model, &t).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        // ties go to the lowest class
        assert_eq!(model.predict(&[1.0, 1.0]), 0);
    }

    #[test]
    fn model_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&toy(), &TrainConfig::default(), 2).unwrap();
        let path = dir.path().join("m.bin");
        out.model.save(&path).unwrap();
        assert_eq!(OnnModel::load(&path).unwrap(), out.model);
    }
}
