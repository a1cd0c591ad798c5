use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qelm::config::ExperimentConfig;
use qelm::dataset::{write_idx, DatasetKind, ImageSet, Split};

/// Writes a small MNIST-shaped dataset whose classes are bright bars at
/// different rows, plus pixel noise.
pub fn synthetic_mnist(root: &Path, train: usize, test: usize) {
    let dir = root.join(DatasetKind::Mnist.subdir());
    std::fs::create_dir_all(&dir).unwrap();
    for (split, count, seed) in [(Split::Train, train, 1u64), (Split::Test, test, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pixels = Vec::with_capacity(count * 784);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let label = (i % 10) as u8;
            for r in 0..28 {
                for _ in 0..28 {
                    let on = r / 3 == label as usize;
                    let base = if on { 200.0 } else { 20.0 };
                    pixels.push((base + rng.random::<f64>() * 50.0) as u8);
                }
            }
            labels.push(label);
        }
        let set = ImageSet::from_raw("mnist", split, vec![28, 28], pixels, labels, 10).unwrap();
        let (img, lab) = DatasetKind::Mnist.idx_files(split).unwrap();
        write_idx(&set, dir.join(img), dir.join(lab)).unwrap();
    }
}

pub fn tiny_config(root: &Path, name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 3;
    cfg.output_dir = root.join(name);
    cfg.data_dir = Some(root.join("data"));
    cfg.dataset.train = 120;
    cfg.dataset.test = 40;
    cfg.reservoir.qubits = 3;
    cfg.reservoir.times = vec![0.0, 0.5, 1.0];
    cfg.reservoir.haar_samples = 3;
    cfg.reservoir.depths = vec![0, 1, 2];
    cfg.classifier.epochs = 5;
    cfg.analysis.plots = false;
    cfg
}

pub fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    synthetic_mnist(&dir.path().join("data"), 300, 100);
    dir
}
