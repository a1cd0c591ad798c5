use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use qelm::config::ExperimentConfig;
use qelm::dataset::{DatasetKind, Split};
use qelm::pipeline::{self, Command, RunRecord, DATA_DIR_ENV};

#[derive(Parser)]
#[command(name = "qelm", version, about = "Quantum extreme learning machine experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Download a dataset into the data directory.
    Fetch {
        /// mnist, fashion or cifar10
        #[arg(value_parser = parse_enum::<DatasetKind>)]
        dataset: DatasetKind,
        #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Accuracy of the XX-chain reservoir over the time grid.
    TimeSweep(RunArgs),
    /// Accuracy after independent Haar-random unitaries.
    HaarBaseline(RunArgs),
    /// Accuracy after each depth of a random brickwork circuit.
    DepthSweep(RunArgs),
    /// Entropy, clustering, light-cone and basis diagnostics.
    Analyze(RunArgs),
    /// Re-run a recorded experiment and compare its CSVs byte for byte.
    Repro {
        record: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<DatasetKind>)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// pca or ae
    #[arg(long, value_parser = parse_enum::<qelm::reduce::ReduceMethod>)]
    reduce: Option<qelm::reduce::ReduceMethod>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    coupling: Option<f64>,
    /// open or periodic
    #[arg(long, value_parser = parse_enum::<qelm::hamiltonian::Boundary>)]
    boundary: Option<qelm::hamiltonian::Boundary>,
    /// Comma-separated evolution times.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    haar_samples: Option<usize>,
    /// Comma-separated circuit depths.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// probabilities, local_paulis or local_z
    #[arg(long, value_parser = parse_enum::<qelm::features::FeatureKind>)]
    features: Option<qelm::features::FeatureKind>,
    /// Measurement shots per state, 0 for exact probabilities.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    no_plots: bool,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl RunArgs {
    fn into_config(self, command: Command) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => {
                let mut cfg = ExperimentConfig::default();
                cfg.output_dir = PathBuf::from("runs").join(command.as_str());
                cfg.reservoir.kind = match command {
                    Command::HaarBaseline => qelm::config::ReservoirKind::Haar,
                    Command::DepthSweep => qelm::config::ReservoirKind::Brickwork,
                    _ => qelm::config::ReservoirKind::XxHamiltonian,
                };
                cfg
            }
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag {
                    cfg.$($field)+ = v;
                }
            };
        }
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir;
        }
        if self.cache_dir.is_some() {
            cfg.cache_dir = self.cache_dir;
        }
        set!(self.output_dir => output_dir);
        set!(self.seed => seed);
        set!(self.dataset => dataset.name);
        set!(self.train => dataset.train);
        set!(self.test => dataset.test);
        set!(self.reduce => reduction.method);
        set!(self.qubits => reservoir.qubits);
        set!(self.coupling => reservoir.coupling);
        set!(self.boundary => reservoir.boundary);
        set!(self.times => reservoir.times);
        set!(self.haar_samples => reservoir.haar_samples);
        set!(self.depths => reservoir.depths);
        set!(self.features => features.kind);
        set!(self.shots => features.shots);
        set!(self.epochs => classifier.epochs);
        if self.latent_dim.is_some() {
            cfg.reduction.latent_dim = self.latent_dim;
        }
        if self.no_plots {
            cfg.analysis.plots = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn download(url: &str) -> anyhow::Result<Vec<u8>> {
    eprintln!("fetching {url}");
    let mut resp = ureq::get(url).call().with_context(|| format!("downloading {url}"))?;
    Ok(resp.body_mut().with_config().limit(512 << 20).read_to_vec()?)
}

fn gunzip(bytes: &[u8]) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(bytes).read_to_end(&mut out)?;
    Ok(out)
}

fn fetch(kind: DatasetKind, root: &Path) -> anyhow::Result<()> {
    let base = match kind {
        DatasetKind::Mnist => "https://ossci-datasets.s3.amazonaws.com/mnist",
        DatasetKind::Fashion => "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com",
        DatasetKind::Cifar10 => {
            let bytes = download("https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz")?;
            std::fs::create_dir_all(root)?;
            tar::Archive::new(flate2::read::GzDecoder::new(bytes.as_slice())).unpack(root)?;
            return Ok(());
        }
    };
    let dir = root.join(kind.subdir());
    std::fs::create_dir_all(&dir)?;
    for split in [Split::Train, Split::Test] {
        let (images, labels) = kind.idx_files(split).expect("idx dataset");
        for name in [images, labels] {
            let target = dir.join(name);
            if target.exists() {
                continue;
            }
            let raw = gunzip(&download(&format!("{base}/{name}.gz"))?)?;
            qelm::dataset::parse_idx(&raw, &target)?;
            std::fs::write(&target, raw)?;
        }
    }
    for split in [Split::Train, Split::Test] {
        let set = qelm::dataset::load(kind, root, split)?;
        eprintln!("{} {}: {} images", kind.as_str(), split.as_str(), set.len());
    }
    Ok(())
}

fn report(record: &RunRecord) {
    for p in &record.points {
        let values: Vec<String> = p.values.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!("{}\t{}", p.x, values.join(" "));
    }
    for (k, v) in &record.summary {
        println!("{k}\t{v}");
    }
    println!(
        "wrote {} files to {} in {:.1}s",
        record.outputs.len(),
        record.config.output_dir.display(),
        record.wall_clock_seconds
    );
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Fetch { dataset, data_dir } => return fetch(dataset, &data_dir),
        Cmd::Repro { record, output_dir } => {
            let rep = pipeline::repro(&record, output_dir)?;
            for (file, same) in &rep.files {
                println!("{}\t{file}", if *same { "same" } else { "DIFFERENT" });
            }
            if !rep.all_match() {
                bail!("reproduction in {} differs from the record", rep.output_dir.display());
            }
            return Ok(());
        }
        Cmd::TimeSweep(a) => (Command::TimeSweep, a),
        Cmd::HaarBaseline(a) => (Command::HaarBaseline, a),
        Cmd::DepthSweep(a) => (Command::DepthSweep, a),
        Cmd::Analyze(a) => (Command::Analyze, a),
    };
    let cfg = args.into_config(command)?;
    let record = pipeline::run(command, &cfg)?;
    report(&record);
    Ok(())
}
