//! End-to-end runs: data → reduction → encoding → reservoir → features →
//! classifier, plus the analysis suite. Every run writes its CSVs row by row
//! into the output directory together with a `run.json` record from which it
//! can be repeated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, adjusted_rand_index, entropy_curve, eigenbasis_stationarity, inertia_accuracy_sweep, kmeans, lr_check,
    max_group_velocity, neel_state, pearson, random_product_states, scaling_collapse, EntropyCurve,
    InitialStatePolicy, SweepPoint,
};
use crate::classifier::{accuracy, train, Standardizer};
use crate::config::{ConfigError, ExperimentConfig, ReservoirKind};
use crate::dataset::{self, Split};
use crate::features::{mub_deviation, FeatureKind, FeatureTable, MeasurementBasis};
use crate::hamiltonian::{Boundary, HamiltonianSpec, SpectralDecomposition};
use crate::plot::{write_line_chart, Series};
use crate::qcore::{encode_dense_angle, PureState};
use crate::randcirc::{apply_global_batch, apply_two_qubit_in_place, brickwork, haar_unitary};
use crate::reduce::{rescale_to_angles, AngleBounds, ReducedCache, Reducer};
use crate::seed::{derive_seed, labeled_rng};
use crate::{Error, Result};

pub const DATA_DIR_ENV: &str = "QELM_DATA_DIR";
pub const RUN_RECORD: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TimeSweep,
    HaarBaseline,
    DepthSweep,
    Analyze,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::TimeSweep => "time-sweep",
            Command::HaarBaseline => "haar-baseline",
            Command::DepthSweep => "depth-sweep",
            Command::Analyze => "analyze",
        }
    }
}

/// One row of a sweep: the swept coordinate and the numbers measured there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub x: f64,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: Command,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub points: Vec<PointResult>,
    pub summary: BTreeMap<String, f64>,
    /// Files written into the output directory, in order.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    fn new(command: Command, config: &ExperimentConfig) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), config.seed);
        Self {
            command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds,
            points: Vec::new(),
            summary: BTreeMap::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.config.seed, label);
        self.seeds.insert(label.to_string(), s);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).map_err(std::io::Error::other)?)
    }

    pub fn point(&self, x: f64) -> Option<&PointResult> {
        self.points.iter().find(|p| p.x == x)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(ConfigError::Invalid(msg.into()))
}

fn at_point<E: Into<Error>>(stage: &'static str, point: String) -> impl FnOnce(E) -> Error {
    move |e| Error::AtPoint {
        stage,
        point,
        source: Box::new(e.into()),
    }
}

/// Dataset root: the config value, else `$QELM_DATA_DIR`, else `./data`.
pub fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.data_dir
        .clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.cache_dir.clone().unwrap_or_else(|| cfg.output_dir.join("cache"))
}

/// CSV file written and flushed one row at a time.
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn row(&mut self, values: &[String]) -> Result<()> {
        writeln!(self.out, "{}", values.join(","))?;
        self.out.flush()?;
        Ok(())
    }

    pub fn nums(&mut self, values: &[f64]) -> Result<()> {
        self.row(&values.iter().map(f64::to_string).collect::<Vec<_>>())
    }
}

/// Encoded states of one split with their labels and file row ids.
#[derive(Debug, Clone)]
pub struct EncodedSplit {
    pub states: Vec<PureState>,
    pub labels: Vec<usize>,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub num_qubits: usize,
    pub train: EncodedSplit,
    pub test: EncodedSplit,
}

fn reduction_key(cfg: &ExperimentConfig) -> u64 {
    derive_seed(
        cfg.seed,
        &format!(
            "reduce/{}/{}/{}/{}/{:?}",
            cfg.dataset.name.as_str(),
            cfg.dataset.train,
            cfg.dataset.test,
            cfg.latent_dim(),
            cfg.reduction
        ),
    )
}

fn reduced_features(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>)> {
    let dir = data_dir(cfg);
    let kind = cfg.dataset.name;
    let train_seed = record.seed("subsample/train");
    let test_seed = record.seed("subsample/test");
    let reduce_seed = record.seed("reduce");
    let train_full = dataset::load(kind, &dir, Split::Train)?;
    let test_full = dataset::load(kind, &dir, Split::Test)?;
    let train = dataset::subsample(&train_full, cfg.dataset.train, train_seed)?;
    let test = dataset::subsample(&test_full, cfg.dataset.test, test_seed)?;
    let labels = |s: &dataset::ImageSet| (0..s.len()).map(|i| s.label(i)).collect::<Vec<_>>();

    let key = reduction_key(cfg);
    let k = cfg.latent_dim();
    let method = cfg.reduction.method;
    let cache = cache_dir(cfg);
    let name = kind.as_str();
    let train_path = cache.join(ReducedCache::file_name(name, Split::Train, method, k, key));
    let test_path = cache.join(ReducedCache::file_name(name, Split::Test, method, k, key));
    let cached = match (ReducedCache::load(&train_path), ReducedCache::load(&test_path)) {
        (Ok(a), Ok(b)) if a.data.shape() == (train.len(), k) && b.data.shape() == (test.len(), k) => {
            Some((a.data, b.data))
        }
        _ => None,
    };
    let (rtrain, rtest) = match cached {
        Some(pair) => pair,
        None => {
            let xtrain = train.to_matrix();
            let reducer = Reducer::fit(method, &xtrain, k, &cfg.reduction.autoencoder, reduce_seed)?;
            let rtrain = reducer.transform(&xtrain)?;
            let rtest = reducer.transform(&test.to_matrix())?;
            std::fs::create_dir_all(&cache)?;
            for (path, split, data) in [(&train_path, Split::Train, &rtrain), (&test_path, Split::Test, &rtest)] {
                ReducedCache {
                    dataset: name.to_string(),
                    split,
                    method,
                    seed: key,
                    data: data.clone(),
                }
                .save(path)?;
            }
            (rtrain, rtest)
        }
    };
    Ok((rtrain, rtest, labels(&train), train.ids().to_vec(), labels(&test), test.ids().to_vec()))
}

/// Loads, subsamples, reduces and encodes both splits. Reduction and angle
/// bounds are fitted on the training split only.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut scratch = RunRecord::new(Command::TimeSweep, cfg);
    prepare_recorded(cfg, &mut scratch)
}

fn prepare_recorded(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Prepared> {
    let (rtrain, rtest, train_labels, train_ids, test_labels, test_ids) = reduced_features(cfg, record)?;
    let bounds = AngleBounds::fit(&rtrain);
    let encode = |m: &DMatrix<f64>| -> Result<Vec<PureState>> {
        let angles = rescale_to_angles(m, &bounds)?;
        angles
            .row_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().copied().collect();
                Ok(encode_dense_angle(&v, cfg.features.encoding)?)
            })
            .collect()
    };
    Ok(Prepared {
        num_qubits: cfg.qubits(),
        train: EncodedSplit {
            states: encode(&rtrain)?,
            labels: train_labels,
            ids: train_ids,
        },
        test: EncodedSplit {
            states: encode(&rtest)?,
            labels: test_labels,
            ids: test_ids,
        },
    })
}

fn feature_key(cfg: &ExperimentConfig, kind: FeatureKind, stage: &str) -> u64 {
    derive_seed(
        reduction_key(cfg),
        &format!("features/{stage}/{:?}/{:?}/{}/{:?}", cfg.reservoir, kind, cfg.features.shots, cfg.features.encoding),
    )
}

/// Feature tables of both splits for one evolved snapshot, read from the
/// cache when enabled.
#[allow(clippy::too_many_arguments)]
fn feature_pair(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    kind: FeatureKind,
    stage: &str,
    tag: f64,
    train_states: &[PureState],
    test_states: &[PureState],
) -> Result<(FeatureTable, FeatureTable)> {
    let shots_seed = derive_seed(cfg.seed, &format!("shots/{stage}/{tag}"));
    let build = |split: &EncodedSplit, states: &[PureState], name: &str| -> Result<FeatureTable> {
        let path = cache_dir(cfg).join(format!(
            "features_{:016x}_{name}_{tag}.bin",
            feature_key(cfg, kind, stage)
        ));
        if cfg.features.cache {
            if let Ok(t) = FeatureTable::load(&path) {
                if t.len() == states.len() && t.sample_ids() == split.ids.as_slice() {
                    return Ok(t);
                }
            }
        }
        let seed = derive_seed(shots_seed, name);
        let table = FeatureTable::from_states(states, &split.labels, &split.ids, kind, tag, cfg.features.shots, seed);
        if cfg.features.cache {
            std::fs::create_dir_all(cache_dir(cfg))?;
            table.save(&path)?;
        }
        Ok(table)
    };
    let mut train_t = build(&prep.train, train_states, "train")?;
    let mut test_t = build(&prep.test, test_states, "test")?;
    if cfg.features.standardize {
        let z = Standardizer::fit(&train_t);
        z.apply(&mut train_t);
        z.apply(&mut test_t);
    }
    Ok((train_t, test_t))
}

/// Trains the output layer and reports (train accuracy, test accuracy).
pub fn train_and_score(cfg: &ExperimentConfig, train_t: &FeatureTable, test_t: &FeatureTable) -> Result<(f64, f64)> {
    let out = train(train_t, &cfg.classifier, derive_seed(cfg.seed, "onn"))?;
    Ok((accuracy(&out.model, train_t)?, accuracy(&out.model, test_t)?))
}

fn start(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn finish(mut record: RunRecord, began: Instant) -> Result<RunRecord> {
    record.wall_clock_seconds = began.elapsed().as_secs_f64();
    record.save(record.config.output_dir.join(RUN_RECORD))?;
    Ok(record)
}

fn accuracy_point(x: f64, train_acc: f64, test_acc: f64) -> PointResult {
    let mut values = BTreeMap::new();
    values.insert("train_acc".to_string(), train_acc);
    values.insert("test_acc".to_string(), test_acc);
    PointResult { x, values }
}

fn plot_accuracy(record: &RunRecord, file: &str, x_label: &str) -> Result<()> {
    let series = ["train_acc", "test_acc"].map(|key| {
        Series::new(
            key,
            record.points.iter().map(|p| (p.x, p.values[key])).collect(),
        )
    });
    write_line_chart(record.config.output_dir.join(file), "accuracy", x_label, "accuracy", &series)?;
    Ok(())
}

/// Accuracy of the XX-chain reservoir at every time of the grid.
pub fn run_time_sweep(cfg: &ExperimentConfig) -> Result<RunRecord> {
    if cfg.reservoir.kind != ReservoirKind::XxHamiltonian {
        return Err(invalid("time-sweep needs reservoir.kind = \"xx_hamiltonian\""));
    }
    let began = Instant::now();
    start(cfg)?;
    let mut record = RunRecord::new(Command::TimeSweep, cfg);
    record.seed("onn");
    let prep = prepare_recorded(cfg, &mut record)?;
    let spec = HamiltonianSpec::new(cfg.qubits(), cfg.reservoir.coupling, cfg.reservoir.boundary)?;
    let dec = SpectralDecomposition::cached(&spec, cache_dir(cfg))?;
    let ptrain = dec.project(&prep.train.states)?;
    let ptest = dec.project(&prep.test.states)?;

    let file = "accuracy_vs_time.csv";
    let mut csv = CsvWriter::create(cfg.output_dir.join(file), &["t", "train_acc", "test_acc"])?;
    record.outputs.push(file.into());
    for &t in &cfg.reservoir.times {
        let point = || -> Result<(f64, f64)> {
            let (train_s, test_s) = if t == 0.0 {
                (prep.train.states.clone(), prep.test.states.clone())
            } else {
                (ptrain.states_at(t), ptest.states_at(t))
            };
            let (a, b) = feature_pair(cfg, &prep, cfg.features.kind, "time", t, &train_s, &test_s)?;
            train_and_score(cfg, &a, &b)
        };
        let (train_acc, test_acc) = point().map_err(at_point("time-sweep", format!("t = {t}")))?;
        csv.nums(&[t, train_acc, test_acc])?;
        record.points.push(accuracy_point(t, train_acc, test_acc));
    }
    if cfg.analysis.plots {
        plot_accuracy(&record, "accuracy_vs_time.svg", "t")?;
        record.outputs.push("accuracy_vs_time.svg".into());
    }
    finish(record, began)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Accuracy after a Haar-random unitary on the whole register, repeated over
/// independent draws.
pub fn run_haar_baseline(cfg: &ExperimentConfig) -> Result<RunRecord> {
    if cfg.reservoir.kind != ReservoirKind::Haar {
        return Err(invalid("haar-baseline needs reservoir.kind = \"haar\""));
    }
    let began = Instant::now();
    start(cfg)?;
    let mut record = RunRecord::new(Command::HaarBaseline, cfg);
    record.seed("onn");
    let prep = prepare_recorded(cfg, &mut record)?;
    let d = 1usize << cfg.qubits();
    let file = "haar_baseline.csv";
    let mut csv = CsvWriter::create(cfg.output_dir.join(file), &["draw", "seed", "train_acc", "test_acc"])?;
    record.outputs.push(file.into());
    for (i, seed) in cfg.haar_seeds().into_iter().enumerate() {
        record.seeds.insert(format!("haar/{i}"), seed);
        let point = || -> Result<(f64, f64)> {
            let u = haar_unitary(d, seed);
            let train_s = apply_global_batch(&u, &prep.train.states)?;
            let test_s = apply_global_batch(&u, &prep.test.states)?;
            let (a, b) = feature_pair(cfg, &prep, cfg.features.kind, &format!("haar{seed}"), i as f64, &train_s, &test_s)?;
            train_and_score(cfg, &a, &b)
        };
        let (train_acc, test_acc) = point().map_err(at_point("haar-baseline", format!("draw {i}")))?;
        csv.row(&[i.to_string(), seed.to_string(), train_acc.to_string(), test_acc.to_string()])?;
        record.points.push(accuracy_point(i as f64, train_acc, test_acc));
    }
    let collect = |key: &str| record.points.iter().map(|p| p.values[key]).collect::<Vec<_>>();
    let (train_v, test_v) = (collect("train_acc"), collect("test_acc"));
    let (train_mean, train_std) = mean_std(&train_v);
    let (test_mean, test_std) = mean_std(&test_v);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let file = "haar_summary.csv";
    let mut summary = CsvWriter::create(cfg.output_dir.join(file), &["statistic", "train_acc", "test_acc"])?;
    for (name, a, b) in [
        ("mean", train_mean, test_mean),
        ("std", train_std, test_std),
        ("min", min(&train_v), min(&test_v)),
        ("max", max(&train_v), max(&test_v)),
    ] {
        summary.row(&[name.to_string(), a.to_string(), b.to_string()])?;
    }
    record.outputs.push(file.into());
    record.summary.insert("train_mean".into(), train_mean);
    record.summary.insert("train_std".into(), train_std);
    record.summary.insert("test_mean".into(), test_mean);
    record.summary.insert("test_std".into(), test_std);
    finish(record, began)
}

/// Accuracy after each prefix depth of one random brickwork circuit. Layers
/// are applied incrementally, so shallow prefixes are never recomputed.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<RunRecord> {
    if cfg.reservoir.kind != ReservoirKind::Brickwork {
        return Err(invalid("depth-sweep needs reservoir.kind = \"brickwork\""));
    }
    let began = Instant::now();
    start(cfg)?;
    let mut record = RunRecord::new(Command::DepthSweep, cfg);
    record.seed("onn");
    let circuit_seed = record.seed("circuit");
    let prep = prepare_recorded(cfg, &mut record)?;
    let n = cfg.qubits();
    let max_depth = cfg.reservoir.depths.last().copied().unwrap_or(0);
    let circuit = brickwork(n, max_depth, circuit_seed, cfg.reservoir.pattern);
    let amps = |s: &EncodedSplit| s.states.iter().map(|p| p.amplitudes().to_vec()).collect::<Vec<_>>();
    let (mut train_a, mut test_a) = (amps(&prep.train), amps(&prep.test));
    let to_states = |a: &[Vec<crate::Complex64>]| -> Result<Vec<PureState>> {
        a.iter().map(|v| Ok(PureState::from_amplitudes(v.clone())?)).collect()
    };

    let file = "accuracy_vs_depth.csv";
    let mut csv = CsvWriter::create(cfg.output_dir.join(file), &["depth", "train_acc", "test_acc"])?;
    record.outputs.push(file.into());
    let mut applied = 0;
    for &depth in &cfg.reservoir.depths {
        let mut point = || -> Result<(f64, f64)> {
            while applied < depth {
                for gate in &circuit.layers[applied] {
                    for v in train_a.iter_mut().chain(test_a.iter_mut()) {
                        apply_two_qubit_in_place(v, n, &gate.unitary.matrix, gate.pair)?;
                    }
                }
                applied += 1;
            }
            let (train_s, test_s) = (to_states(&train_a)?, to_states(&test_a)?);
            let (a, b) = feature_pair(cfg, &prep, cfg.features.kind, "depth", depth as f64, &train_s, &test_s)?;
            train_and_score(cfg, &a, &b)
        };
        let (train_acc, test_acc) = point().map_err(at_point("depth-sweep", format!("depth {depth}")))?;
        csv.row(&[depth.to_string(), train_acc.to_string(), test_acc.to_string()])?;
        record.points.push(accuracy_point(depth as f64, train_acc, test_acc));
    }
    if cfg.analysis.plots {
        plot_accuracy(&record, "accuracy_vs_depth.svg", "depth")?;
        record.outputs.push("accuracy_vs_depth.svg".into());
    }
    finish(record, began)
}

/// Initial states for the entropy sweep at size `n`.
fn entropy_states(cfg: &ExperimentConfig, n: usize, record: &mut RunRecord) -> Result<Vec<PureState>> {
    let count = cfg.analysis.entropy_samples.max(1);
    Ok(match cfg.analysis.policy {
        InitialStatePolicy::Neel => vec![neel_state(n)],
        InitialStatePolicy::RandomProduct => random_product_states(n, count, record.seed("entropy/product")),
        InitialStatePolicy::Encoded => {
            let mut sized = cfg.clone();
            sized.reservoir.qubits = n;
            sized.reduction.latent_dim = None;
            let prep = prepare_recorded(&sized, record)?;
            prep.train.states.into_iter().take(count).collect()
        }
    })
}

fn entropy_part(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let out = &cfg.output_dir;
    let mut curves: Vec<EntropyCurve> = Vec::new();
    for &n in &cfg.analysis.sizes {
        let states = entropy_states(cfg, n, record).map_err(at_point("entropy", format!("N = {n}")))?;
        let spec = HamiltonianSpec::new(n, cfg.reservoir.coupling, cfg.reservoir.boundary)?;
        let dec = SpectralDecomposition::cached(&spec, cache_dir(cfg))?;
        let curve = entropy_curve(&dec, &states, &cfg.analysis.entropy_times)
            .map_err(at_point("entropy", format!("N = {n}")))?;
        let file = format!("entropy_N{n}.csv");
        let mut csv = CsvWriter::create(out.join(&file), &["t", "S_half", "S_single"])?;
        for i in 0..curve.times.len() {
            csv.nums(&[curve.times[i], curve.half[i], curve.single[i]])?;
        }
        record.outputs.push(file);
        curves.push(curve);
    }
    if curves.len() >= 2 {
        let col = scaling_collapse(&curves)?;
        let mut header = vec!["t_over_N".to_string()];
        header.extend(col.sizes.iter().map(|n| format!("S_N{n}")));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = CsvWriter::create(out.join("collapse.csv"), &header_ref)?;
        for (i, x) in col.grid.iter().enumerate() {
            let mut row = vec![*x];
            row.extend(col.values.iter().map(|v| v[i]));
            csv.nums(&row)?;
        }
        record.outputs.push("collapse.csv".into());
        let mut csv = CsvWriter::create(
            out.join("collapse_summary.csv"),
            &["N", "slope", "saturation", "onset", "post_maxima", "period_1", "period_2", "deviation"],
        )?;
        for (i, c) in curves.iter().enumerate() {
            let n = c.num_qubits as f64;
            let period = |k: usize| col.periods[i].get(k).copied().unwrap_or(f64::NAN);
            csv.nums(&[
                n,
                c.half_slope(0.2, 0.6 * n / 2.0),
                c.saturation_value(),
                col.onsets[i],
                col.post_maxima[i] as f64,
                period(0),
                period(1),
                col.deviation,
            ])?;
        }
        record.outputs.push("collapse_summary.csv".into());
        record.summary.insert("collapse_deviation".into(), col.deviation);
        if cfg.analysis.plots {
            let series: Vec<Series> = col
                .sizes
                .iter()
                .zip(&col.values)
                .map(|(n, v)| Series::new(format!("N={n}"), col.grid.iter().copied().zip(v.iter().copied()).collect()))
                .collect();
            write_line_chart(out.join("collapse.svg"), "scaling collapse", "t/N", "S/(N/2)", &series)?;
            record.outputs.push("collapse.svg".into());
        }
    }
    if cfg.analysis.plots && !curves.is_empty() {
        let series: Vec<Series> = curves
            .iter()
            .flat_map(|c| {
                let pts = |v: &[f64]| c.times.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
                [
                    Series::new(format!("half N={}", c.num_qubits), pts(&c.half)),
                    Series::new(format!("single N={}", c.num_qubits), pts(&c.single)),
                ]
            })
            .collect();
        write_line_chart(out.join("entropy.svg"), "entanglement entropy", "t", "S", &series)?;
        record.outputs.push("entropy.svg".into());
    }
    Ok(())
}

fn clusters_part(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let out = &cfg.output_dir;
    let prep = prepare_recorded(cfg, record)?;
    let spec = HamiltonianSpec::new(cfg.qubits(), cfg.reservoir.coupling, cfg.reservoir.boundary)?;
    let dec = SpectralDecomposition::cached(&spec, cache_dir(cfg))?;
    let ptrain = dec.project(&prep.train.states)?;
    let ptest = dec.project(&prep.test.states)?;
    let kmeans_seed = record.seed("kmeans");
    let times = &cfg.analysis.cluster_times;
    let mut assignments: Vec<Vec<Vec<usize>>> = Vec::new();
    for kind in [FeatureKind::Probabilities, FeatureKind::LocalPaulis] {
        let mut tables = Vec::with_capacity(times.len());
        for &t in times {
            let (train_s, test_s) = if t == 0.0 {
                (prep.train.states.clone(), prep.test.states.clone())
            } else {
                (ptrain.states_at(t), ptest.states_at(t))
            };
            tables.push(feature_pair(cfg, &prep, kind, "clusters", t, &train_s, &test_s)?);
        }
        let points: Vec<SweepPoint<'_>> = times
            .iter()
            .zip(&tables)
            .map(|(&t, (a, b))| SweepPoint { t, train: a, test: b })
            .collect();
        let rows = inertia_accuracy_sweep(&points, cfg.analysis.cluster_k, kmeans_seed, &cfg.classifier)
            .map_err(at_point("clusters", kind.as_str().to_string()))?;
        let file = format!("clusters_{}.csv", kind.as_str());
        let mut csv = CsvWriter::create(out.join(&file), &["t", "inertia", "ari", "train_acc", "test_acc"])?;
        for r in &rows {
            csv.nums(&[r.t, r.inertia, r.ari, r.train_acc, r.test_acc])?;
        }
        record.outputs.push(file);
        let inertia: Vec<f64> = rows.iter().map(|r| r.inertia).collect();
        let test_acc: Vec<f64> = rows.iter().map(|r| r.test_acc).collect();
        record
            .summary
            .insert(format!("{}_accuracy_inertia_pearson", kind.as_str()), pearson(&test_acc, &inertia));
        for r in &rows {
            let mut values = BTreeMap::new();
            values.insert(format!("{}_inertia", kind.as_str()), r.inertia);
            values.insert(format!("{}_ari", kind.as_str()), r.ari);
            values.insert(format!("{}_train_acc", kind.as_str()), r.train_acc);
            values.insert(format!("{}_test_acc", kind.as_str()), r.test_acc);
            match record.points.iter_mut().find(|p| p.x == r.t) {
                Some(p) => p.values.extend(values),
                None => record.points.push(PointResult { x: r.t, values }),
            }
        }
        assignments.push(
            tables
                .iter()
                .map(|(a, _)| kmeans(a.rows(), a.dim(), cfg.analysis.cluster_k, kmeans_seed, 300).map(|c| c.assignments))
                .collect::<std::result::Result<_, _>>()?,
        );
        if cfg.analysis.plots {
            let series = [
                Series::new("inertia / max", normalize(&inertia).into_iter().enumerate().map(|(i, v)| (times[i], v)).collect()),
                Series::new("test accuracy", times.iter().copied().zip(test_acc.iter().copied()).collect()),
            ];
            let file = format!("clusters_{}.svg", kind.as_str());
            write_line_chart(out.join(&file), kind.as_str(), "t", "value", &series)?;
            record.outputs.push(file);
        }
    }
    for (ti, &t) in times.iter().enumerate() {
        let file = format!("clusters_t{t}.csv");
        let mut csv = CsvWriter::create(
            out.join(&file),
            &["sample_id", "label", "cluster_probabilities", "cluster_local_paulis"],
        )?;
        for (i, (&id, &label)) in prep.train.ids.iter().zip(&prep.train.labels).enumerate() {
            csv.row(&[
                id.to_string(),
                label.to_string(),
                assignments[0][ti][i].to_string(),
                assignments[1][ti][i].to_string(),
            ])?;
        }
        record.outputs.push(file);
    }
    if let Some(last) = times.len().checked_sub(1) {
        let ari = adjusted_rand_index(&assignments[0][last], &assignments[1][last])?;
        record.summary.insert("cluster_kinds_ari_last".into(), ari);
    }
    Ok(())
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(0.0, f64::max);
    v.iter().map(|x| if m > 0.0 { x / m } else { 0.0 }).collect()
}

fn lr_part(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let rep = lr_check(cfg.analysis.lr_sites, cfg.reservoir.coupling, &cfg.analysis.lr_times, Boundary::Open)?;
    let mut csv = CsvWriter::create(cfg.output_dir.join("lr_report.csv"), &["t", "bulk_deviation", "cone_ratio"])?;
    for r in &rep.rows {
        csv.nums(&[r.t, r.bulk_deviation, r.cone_ratio])?;
    }
    record.outputs.push("lr_report.csv".into());
    record.summary.insert("lr_max_deviation".into(), rep.max_deviation);
    record.summary.insert("lr_cone_violation".into(), rep.cone_violation as u8 as f64);
    record
        .summary
        .insert("max_group_velocity".into(), max_group_velocity(cfg.reservoir.coupling, 10_001));
    Ok(())
}

/// Dense-angle encodings of uniformly random angles in `[0, π]`.
pub fn random_encoded_states(num_qubits: usize, count: usize, seed: u64) -> Result<Vec<PureState>> {
    let mut rng = labeled_rng(seed, "encoded/random");
    (0..count)
        .map(|_| {
            let angles: Vec<f64> = (0..2 * num_qubits).map(|_| rng.random::<f64>() * std::f64::consts::PI).collect();
            Ok(encode_dense_angle(&angles, Default::default())?)
        })
        .collect()
}

fn eigenbasis_part(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let n = cfg.qubits();
    let spec = HamiltonianSpec::new(n, cfg.reservoir.coupling, cfg.reservoir.boundary)?;
    let dec = SpectralDecomposition::cached(&spec, cache_dir(cfg))?;
    let states = random_encoded_states(n, 20, record.seed("eigenbasis"))?;
    let mut csv = CsvWriter::create(cfg.output_dir.join("eigenbasis_check.csv"), &["t", "max_deviation"])?;
    let mut worst: f64 = 0.0;
    for &t in &cfg.reservoir.times {
        let dev = eigenbasis_stationarity(&dec, &states, &[t])?;
        worst = worst.max(dev);
        csv.nums(&[t, dev])?;
    }
    record.outputs.push("eigenbasis_check.csv".into());
    record.summary.insert("eigenbasis_max_deviation".into(), worst);
    Ok(())
}

fn mub_part(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let mut csv = CsvWriter::create(cfg.output_dir.join("mub_report.csv"), &["pair", "dim", "deviation"])?;
    for q in 1..=cfg.qubits() {
        let d = 1usize << q;
        let dev = mub_deviation(&MeasurementBasis::computational(d), &MeasurementBasis::fourier(d))?;
        csv.row(&["computational_fourier".into(), d.to_string(), dev.to_string()])?;
        if q >= 2 {
            let spec = HamiltonianSpec::new(q, cfg.reservoir.coupling, cfg.reservoir.boundary)?;
            let dec = SpectralDecomposition::cached(&spec, cache_dir(cfg))?;
            let dev = mub_deviation(&MeasurementBasis::computational(d), &MeasurementBasis::eigenbasis(&dec))?;
            csv.row(&["computational_eigenbasis".into(), d.to_string(), dev.to_string()])?;
        }
    }
    record.outputs.push("mub_report.csv".into());
    Ok(())
}

/// Runs every analysis enabled in the configuration.
pub fn run_analysis(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let began = Instant::now();
    start(cfg)?;
    let mut record = RunRecord::new(Command::Analyze, cfg);
    record.seed("onn");
    let a = &cfg.analysis;
    if a.entropy {
        entropy_part(cfg, &mut record)?;
    }
    if a.clusters {
        clusters_part(cfg, &mut record)?;
    }
    if a.lr {
        lr_part(cfg, &mut record)?;
    }
    if a.eigenbasis {
        eigenbasis_part(cfg, &mut record)?;
    }
    if a.mub {
        mub_part(cfg, &mut record)?;
    }
    record.points.sort_by(|p, q| p.x.total_cmp(&q.x));
    finish(record, began)
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunRecord> {
    match command {
        Command::TimeSweep => run_time_sweep(cfg),
        Command::HaarBaseline => run_haar_baseline(cfg),
        Command::DepthSweep => run_depth_sweep(cfg),
        Command::Analyze => run_analysis(cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproReport {
    pub output_dir: PathBuf,
    /// Each CSV of the original run and whether the repeat matched it byte for byte.
    pub files: Vec<(String, bool)>,
}

impl ReproReport {
    pub fn all_match(&self) -> bool {
        !self.files.is_empty() && self.files.iter().all(|f| f.1)
    }
}

/// Re-executes a run from its record into `out` (by default the original
/// directory with a `-repro` suffix) and compares every CSV.
pub fn repro(record_path: impl AsRef<Path>, out: Option<PathBuf>) -> Result<ReproReport> {
    let record_path = record_path.as_ref();
    let original = RunRecord::load(record_path)?;
    let original_dir = record_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut cfg = original.config.clone();
    let target = out.unwrap_or_else(|| {
        let mut name = cfg.output_dir.file_name().unwrap_or_default().to_os_string();
        name.push("-repro");
        cfg.output_dir.with_file_name(name)
    });
    if cfg.cache_dir.is_none() {
        cfg.cache_dir = Some(target.join("cache"));
    }
    cfg.output_dir = target.clone();
    let rerun = run(original.command, &cfg)?;
    let files = original
        .outputs
        .iter()
        .filter(|f| f.ends_with(".csv"))
        .map(|f| {
            let a = std::fs::read(original_dir.join(f)).ok();
            let b = std::fs::read(rerun.config.output_dir.join(f)).ok();
            (f.clone(), a.is_some() && a == b)
        })
        .collect();
    Ok(ReproReport {
        output_dir: target,
        files,
    })
}

pub use analysis::LrReport;
