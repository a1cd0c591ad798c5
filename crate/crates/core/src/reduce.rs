//! Dimensionality reduction of raw images to `2N` features and the affine
//! map of those features onto encoding angles.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::classifier::{adam_step, AdamState, TrainConfig};
use crate::dataset::Split;
use crate::seed::labeled_rng;

const REDUCED_MAGIC: &[u8; 8] = b"QELMRED1";

#[derive(Debug, thiserror::Error)]
pub enum ReduceError {
    #[error("data has zero variance in every direction")]
    DegenerateData,
    #[error("k = {k} exceeds min(samples, dim) = {max}")]
    KTooLarge { k: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("data contains non-finite values")]
    NonFiniteData,
    #[error("autoencoder loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("reduced-feature cache: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ReduceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMethod {
    #[default]
    Pca,
    Ae,
}

impl ReduceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReduceMethod::Pca => "pca",
            ReduceMethod::Ae => "ae",
        }
    }

    fn code(self) -> u8 {
        match self {
            ReduceMethod::Pca => 0,
            ReduceMethod::Ae => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ReduceMethod::Pca),
            1 => Some(ReduceMethod::Ae),
            _ => None,
        }
    }
}

impl std::str::FromStr for ReduceMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pca" => Ok(ReduceMethod::Pca),
            "ae" => Ok(ReduceMethod::Ae),
            other => Err(format!("unknown reduction method {other:?}")),
        }
    }
}

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ReduceError::NonFiniteData)
    }
}

fn check_cols(data: &DMatrix<f64>, expected: usize) -> Result<()> {
    if data.ncols() != expected {
        return Err(ReduceError::DimMismatch {
            expected,
            found: data.ncols(),
        });
    }
    Ok(())
}

fn column_mean(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows().max(1) as f64;
    DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n))
}

fn centered(data: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = data.clone();
    for (mut col, m) in x.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k × raw_dim`, orthonormal rows in order of decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn raw_dim(&self) -> usize {
        self.components.ncols()
    }
}

/// Top-`k` right singular vectors of the centered data. Each component is
/// signed so that its largest-magnitude entry is positive.
pub fn pca_fit(data: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = data.shape();
    let max = n.min(d);
    if k > max {
        return Err(ReduceError::KTooLarge { k, max });
    }
    check_finite(data)?;
    let mean = column_mean(data);
    let x = centered(data, &mean);
    // For tall data the right singular vectors of R from X = QR are those of X.
    let target = if n > d { x.qr().r() } else { x };
    let svd = target.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors were requested");
    let sv = svd.singular_values;
    let scale = data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if sv.iter().all(|&s| s <= 1e-12 * scale) {
        return Err(ReduceError::DegenerateData);
    }
    let mut components = DMatrix::zeros(k, d);
    for r in 0..k {
        let mut row = vt.row(r).into_owned();
        let mut big = 0;
        for j in 0..d {
            if row[j].abs() > row[big].abs() {
                big = j;
            }
        }
        if row[big] < 0.0 {
            row.neg_mut();
        }
        components.set_row(r, &row);
    }
    let denom = (n.max(2) - 1) as f64;
    let explained_variance = (0..k).map(|r| sv[r] * sv[r] / denom).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// `(data − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_cols(data, model.raw_dim())?;
    Ok(centered(data, &model.mean) * model.components.transpose())
}

/// `reduced · components + mean`.
pub fn pca_inverse(model: &PcaModel, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_cols(reduced, model.k())?;
    let mut x = reduced * &model.components;
    for (mut col, m) in x.column_iter_mut().zip(model.mean.iter()) {
        col.add_scalar_mut(*m);
    }
    Ok(x)
}

/// Mean squared reconstruction error per entry.
pub fn reconstruction_mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared() / (a.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub shuffle: bool,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            activation: Activation::Sigmoid,
            shuffle: true,
        }
    }
}

impl AeConfig {
    fn adam(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size.max(1),
            ..TrainConfig::default()
        }
    }
}

/// One hidden layer autoencoder with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    /// `k × raw_dim`
    pub enc_w: DMatrix<f64>,
    pub enc_b: DVector<f64>,
    /// `raw_dim × k`
    pub dec_w: DMatrix<f64>,
    pub dec_b: DVector<f64>,
    pub activation: Activation,
}

impl AeModel {
    pub fn k(&self) -> usize {
        self.enc_w.nrows()
    }

    pub fn raw_dim(&self) -> usize {
        self.enc_w.ncols()
    }

    fn hidden(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.enc_w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.enc_b.transpose();
        }
        z.apply(|v| *v = self.activation.apply(*v));
        z
    }

    fn output(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = h * self.dec_w.transpose();
        for mut row in y.row_iter_mut() {
            row += self.dec_b.transpose();
        }
        y
    }

    pub fn encode(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_cols(data, self.raw_dim())?;
        Ok(self.hidden(data))
    }

    pub fn reconstruct(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_cols(data, self.raw_dim())?;
        Ok(self.output(&self.hidden(data)))
    }

    pub fn mse(&self, data: &DMatrix<f64>) -> Result<f64> {
        Ok(reconstruction_mse(&self.reconstruct(data)?, data))
    }
}

struct AeGrads {
    enc_w: DMatrix<f64>,
    enc_b: DVector<f64>,
    dec_w: DMatrix<f64>,
    dec_b: DVector<f64>,
}

fn ae_gradient(model: &AeModel, x: &DMatrix<f64>) -> AeGrads {
    let h = model.hidden(x);
    let y = model.output(&h);
    let scale = 2.0 / (x.len().max(1) as f64);
    let dy = (y - x) * scale;
    let dec_w = dy.transpose() * &h;
    let dec_b = DVector::from_iterator(dy.ncols(), dy.column_iter().map(|c| c.sum()));
    let mut dz = &dy * &model.dec_w;
    dz.zip_apply(&h, |g, hv| *g *= model.activation.slope(hv));
    let enc_w = dz.transpose() * x;
    let enc_b = DVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum()));
    AeGrads {
        enc_w,
        enc_b,
        dec_w,
        dec_b,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeOutcome {
    pub model: AeModel,
    /// Full-set reconstruction MSE after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains an autoencoder with latent size `k` by mini-batch Adam on the mean
/// squared reconstruction error.
pub fn ae_fit(data: &DMatrix<f64>, k: usize, cfg: &AeConfig, seed: u64) -> Result<AeOutcome> {
    let (n, d) = data.shape();
    if k > d {
        return Err(ReduceError::KTooLarge { k, max: d });
    }
    check_finite(data)?;
    let mut rng = labeled_rng(seed, "ae/init");
    let enc_sd = Normal::new(0.0, 1.0 / (d.max(1) as f64).sqrt()).expect("positive sd");
    let dec_sd = Normal::new(0.0, 1.0 / (k.max(1) as f64).sqrt()).expect("positive sd");
    let mut model = AeModel {
        enc_w: DMatrix::from_fn(k, d, |_, _| enc_sd.sample(&mut rng)),
        enc_b: DVector::zeros(k),
        dec_w: DMatrix::from_fn(d, k, |_, _| dec_sd.sample(&mut rng)),
        dec_b: column_mean(data),
        activation: cfg.activation,
    };
    let adam = cfg.adam();
    let mut states = [
        AdamState::new(k * d),
        AdamState::new(k),
        AdamState::new(d * k),
        AdamState::new(d),
    ];
    let mut shuffle_rng = labeled_rng(seed, "ae/shuffle");
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for batch in order.chunks(adam.batch_size) {
            let xb = data.select_rows(batch.iter());
            let g = ae_gradient(&model, &xb);
            adam_step(model.enc_w.as_mut_slice(), g.enc_w.as_slice(), &mut states[0], &adam);
            adam_step(model.enc_b.as_mut_slice(), g.enc_b.as_slice(), &mut states[1], &adam);
            adam_step(model.dec_w.as_mut_slice(), g.dec_w.as_slice(), &mut states[2], &adam);
            adam_step(model.dec_b.as_mut_slice(), g.dec_b.as_slice(), &mut states[3], &adam);
        }
        let loss = model.mse(data)?;
        if !loss.is_finite() {
            return Err(ReduceError::NonFiniteLoss(epoch));
        }
        losses.push(loss);
    }
    Ok(AeOutcome {
        model,
        epoch_losses: losses,
    })
}

/// A fitted reduction of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    Pca(PcaModel),
    Ae(AeModel),
}

impl Reducer {
    pub fn fit(method: ReduceMethod, data: &DMatrix<f64>, k: usize, ae: &AeConfig, seed: u64) -> Result<Self> {
        Ok(match method {
            ReduceMethod::Pca => Reducer::Pca(pca_fit(data, k)?),
            ReduceMethod::Ae => Reducer::Ae(ae_fit(data, k, ae, seed)?.model),
        })
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Reducer::Pca(m) => pca_transform(m, data),
            Reducer::Ae(m) => m.encode(data),
        }
    }

    pub fn method(&self) -> ReduceMethod {
        match self {
            Reducer::Pca(_) => ReduceMethod::Pca,
            Reducer::Ae(_) => ReduceMethod::Ae,
        }
    }
}

/// Per-feature range learned on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl AngleBounds {
    pub fn fit(train: &DMatrix<f64>) -> Self {
        let min = train.column_iter().map(|c| c.min()).collect();
        let max = train.column_iter().map(|c| c.max()).collect();
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// Maps each feature affinely from `[min, max]` onto `[0, π]`, clamping values
/// outside the bounds. Constant features map to `π/2`.
pub fn rescale_to_angles(reduced: &DMatrix<f64>, bounds: &AngleBounds) -> Result<DMatrix<f64>> {
    check_cols(reduced, bounds.dim())?;
    let mut out = reduced.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (lo, hi) = (bounds.min[j], bounds.max[j]);
        let width = hi - lo;
        let constant = !(width > 1e-12 * lo.abs().max(hi.abs()).max(1.0));
        for v in col.iter_mut() {
            *v = if constant {
                PI / 2.0
            } else {
                ((*v - lo) / width).clamp(0.0, 1.0) * PI
            };
        }
    }
    Ok(out)
}

/// Reduced feature matrix together with the key it was computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCache {
    pub dataset: String,
    pub split: Split,
    pub method: ReduceMethod,
    pub seed: u64,
    pub data: DMatrix<f64>,
}

impl ReducedCache {
    pub fn file_name(dataset: &str, split: Split, method: ReduceMethod, k: usize, seed: u64) -> String {
        format!("reduced_{dataset}_{}_{}_k{k}_s{seed}.bin", split.as_str(), method.as_str())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        binio::write_header(&mut w, REDUCED_MAGIC)?;
        binio::write_u8(&mut w, self.method.code())?;
        binio::write_u8(&mut w, matches!(self.split, Split::Test) as u8)?;
        binio::write_u64(&mut w, self.seed)?;
        binio::write_str(&mut w, &self.dataset)?;
        binio::write_u64(&mut w, self.data.nrows() as u64)?;
        binio::write_u64(&mut w, self.data.ncols() as u64)?;
        for row in self.data.row_iter() {
            for v in row.iter() {
                binio::write_f64(&mut w, *v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        binio::read_header(&mut r, REDUCED_MAGIC)?;
        let bad = |what: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, what.to_string());
        let method = ReduceMethod::from_code(binio::read_u8(&mut r)?).ok_or_else(|| bad("unknown method tag"))?;
        let split = match binio::read_u8(&mut r)? {
            0 => Split::Train,
            1 => Split::Test,
            _ => return Err(bad("unknown split tag").into()),
        };
        let seed = binio::read_u64(&mut r)?;
        let dataset = binio::read_str(&mut r)?;
        let rows = binio::read_u64(&mut r)? as usize;
        let cols = binio::read_u64(&mut r)? as usize;
        let values = binio::read_f64s(&mut r, rows * cols)?;
        Ok(Self {
            dataset,
            split,
            method,
            seed,
            data: DMatrix::from_row_slice(rows, cols, &values),
        })
    }
}
