//! Parsers for the benchmark image sets: the IDX layout used by MNIST and
//! Fashion-MNIST, and the CIFAR-10 binary batches.
//!
//! Pixels are kept as the raw bytes of the source file and exposed as reals
//! in `[0, 1]` (byte / 255), so a parsed set can be written back bit-exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;

pub const IDX_UBYTE: u8 = 0x08;
pub const CIFAR_IMAGE_BYTES: usize = 3072;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_IMAGE_BYTES + 1;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: not an IDX file (bad magic bytes)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported IDX element type 0x{code:02x}")]
    UnsupportedType { path: PathBuf, code: u8 },
    #[error("{path}: truncated, header promises {expected} payload bytes, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: expected rank {expected}, found rank {found}")]
    RankMismatch {
        path: PathBuf,
        expected: u8,
        found: u8,
    },
    #[error("image count {images} does not match label count {labels}")]
    LabelCountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u8, num_classes: usize },
    #[error("missing CIFAR-10 batch {path}")]
    MissingBatch { path: PathBuf },
    #[error("{path}: length {len} is not a multiple of {record} bytes")]
    RecordSizeMismatch {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("requested {requested} samples but the set only has {available}")]
    TooFewSamples { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Cifar10,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn raw_dim(self) -> usize {
        match self {
            DatasetKind::Mnist | DatasetKind::Fashion => 784,
            DatasetKind::Cifar10 => CIFAR_IMAGE_BYTES,
        }
    }

    /// Directory below the data root holding this dataset's files.
    pub fn subdir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Cifar10 => "cifar-10-batches-bin",
        }
    }

    /// Image and label file names for the IDX datasets.
    pub fn idx_files(self, split: Split) -> Option<(&'static str, &'static str)> {
        match (self, split) {
            (DatasetKind::Cifar10, _) => None,
            (_, Split::Train) => Some(("train-images-idx3-ubyte", "train-labels-idx1-ubyte")),
            (_, Split::Test) => Some(("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")),
        }
    }
}

/// A labeled set of flattened images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub name: String,
    pub split: Split,
    /// Row-major `num_samples × raw_dim` raw bytes.
    pixels: Vec<u8>,
    labels: Vec<u8>,
    /// Index of each row in the file it was parsed from.
    ids: Vec<usize>,
    raw_dim: usize,
    /// Image shape below the sample axis, e.g. `[28, 28]` or `[3, 32, 32]`.
    shape: Vec<usize>,
    num_classes: usize,
}

impl ImageSet {
    pub fn from_raw(
        name: impl Into<String>,
        split: Split,
        shape: Vec<usize>,
        pixels: Vec<u8>,
        labels: Vec<u8>,
        num_classes: usize,
    ) -> Result<Self> {
        let raw_dim: usize = shape.iter().product();
        let rows = if raw_dim == 0 { 0 } else { pixels.len() / raw_dim };
        if rows * raw_dim != pixels.len() || rows != labels.len() {
            return Err(DatasetError::LabelCountMismatch {
                images: rows,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(DatasetError::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            name: name.into(),
            split,
            pixels,
            labels,
            ids: (0..rows).collect(),
            raw_dim,
            shape,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn raw_row(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.raw_dim..(i + 1) * self.raw_dim]
    }

    /// Row `i` scaled into `[0, 1]`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.raw_row(i).iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn pixel(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.raw_dim + j] as f64 / 255.0
    }

    /// Row-major `num_samples × raw_dim` matrix of scaled pixels.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.len(), self.raw_dim, |i, j| self.pixel(i, j))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New set holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> ImageSet {
        let mut pixels = Vec::with_capacity(rows.len() * self.raw_dim);
        for &r in rows {
            pixels.extend_from_slice(self.raw_row(r));
        }
        ImageSet {
            name: self.name.clone(),
            split: self.split,
            pixels,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            raw_dim: self.raw_dim,
            shape: self.shape.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// A parsed IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses an IDX buffer. Dimensions are big-endian `u32` regardless of host.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes[2] != IDX_UBYTE {
        return Err(DatasetError::UnsupportedType {
            path: path.to_path_buf(),
            code: bytes[2],
        });
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(DatasetError::TruncatedFile {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..rank)
        .map(|k| {
            let off = 4 + 4 * k;
            u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        })
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(DatasetError::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: payload[..expected].to_vec(),
    })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    parse_idx(&read_file(path)?, path)
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, array.dims.len() as u8]);
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Loads a rank-3 image file and its rank-1 label file.
pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    name: &str,
    split: Split,
) -> Result<ImageSet> {
    let images_path = images.as_ref();
    let labels_path = labels.as_ref();
    let img = read_idx(images_path)?;
    if img.dims.len() != 3 {
        return Err(DatasetError::RankMismatch {
            path: images_path.to_path_buf(),
            expected: 3,
            found: img.dims.len() as u8,
        });
    }
    let lab = read_idx(labels_path)?;
    if lab.dims.len() != 1 {
        return Err(DatasetError::RankMismatch {
            path: labels_path.to_path_buf(),
            expected: 1,
            found: lab.dims.len() as u8,
        });
    }
    ImageSet::from_raw(
        name,
        split,
        img.dims[1..].to_vec(),
        img.data,
        lab.data,
        NUM_CLASSES,
    )
}

/// Writes the set as an IDX image file plus an IDX label file.
pub fn write_idx(set: &ImageSet, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let mut dims = vec![set.len()];
    dims.extend_from_slice(&set.shape);
    let img = encode_idx(&IdxArray {
        dims,
        data: set.pixels.clone(),
    });
    let lab = encode_idx(&IdxArray {
        dims: vec![set.len()],
        data: set.labels.clone(),
    });
    write_file(images.as_ref(), &img)?;
    write_file(labels.as_ref(), &lab)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Parses one CIFAR-10 batch: records of one label byte and 3072 pixel bytes
/// (R plane, G plane, B plane, each 32×32 row-major).
pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(DatasetError::RecordSizeMismatch {
            path: path.to_path_buf(),
            len: bytes.len(),
            record: CIFAR_RECORD_BYTES,
        });
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CIFAR_IMAGE_BYTES);
    for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((pixels, labels))
}

pub fn cifar_batch_files(split: Split) -> Vec<String> {
    match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".to_string()],
    }
}

/// Loads the CIFAR-10 batches of one split from `dir`, keeping all 3072
/// channel-major features per image.
pub fn load_cifar10(dir: impl AsRef<Path>, split: Split) -> Result<ImageSet> {
    let dir = dir.as_ref();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for file in cifar_batch_files(split) {
        let path = dir.join(&file);
        if !path.is_file() {
            return Err(DatasetError::MissingBatch { path });
        }
        let (p, l) = parse_cifar_batch(&read_file(&path)?, &path)?;
        pixels.extend(p);
        labels.extend(l);
    }
    ImageSet::from_raw("cifar10", split, vec![3, 32, 32], pixels, labels, NUM_CLASSES)
}

/// Loads one split of a dataset from the conventional layout below `data_dir`.
pub fn load(kind: DatasetKind, data_dir: impl AsRef<Path>, split: Split) -> Result<ImageSet> {
    let dir = data_dir.as_ref().join(kind.subdir());
    match kind.idx_files(split) {
        Some((images, labels)) => load_idx(dir.join(images), dir.join(labels), kind.as_str(), split),
        None => load_cifar10(dir, split),
    }
}

/// Stratified subsample of `n` rows. Per-class quotas follow the class
/// proportions by largest remainder, so each class lands within one sample
/// of its exact share. Rows keep their original relative order.
pub fn subsample(set: &ImageSet, n: usize, seed: u64) -> Result<ImageSet> {
    let total = set.len();
    if n > total {
        return Err(DatasetError::TooFewSamples {
            requested: n,
            available: total,
        });
    }
    if n == total {
        return Ok(set.clone());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); set.num_classes];
    for (i, &l) in set.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut quotas: Vec<usize> = by_class.iter().map(|g| g.len() * n / total).collect();
    let mut remaining = n - quotas.iter().sum::<usize>();
    // largest fractional part first, ties to the lower class id
    let mut order: Vec<usize> = (0..set.num_classes).collect();
    order.sort_by_key(|&c| std::cmp::Reverse((by_class[c].len() * n) % total));
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if quotas[c] < by_class[c].len() {
            quotas[c] += 1;
            remaining -= 1;
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut chosen = Vec::with_capacity(n);
    for (group, &quota) in by_class.iter_mut().zip(&quotas) {
        group.shuffle(&mut rng);
        chosen.extend_from_slice(&group[..quota]);
    }
    chosen.sort_unstable();
    Ok(set.select(&chosen))
}
