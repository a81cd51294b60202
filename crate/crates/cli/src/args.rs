use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gtnc::{Manifest, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "gtnc",
    version,
    about = "Generative tensor-network classification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, pool and subsample an IDX dataset and record how it was built.
    Ingest(IngestArgs),
    /// Train one generative MPS per class (or a single class).
    Train(TrainArgs),
    /// Train the discriminative labelled MPS baseline.
    TrainDisc(TrainDiscArgs),
    /// Write per-sample predictions of a trained model.
    Classify(EvalArgs),
    /// Accuracy, precision/recall, confusion matrix and log-fidelities.
    Eval(EvalArgs),
    /// Class-pair distance or fidelity matrices and clustering summary.
    Distances(DistancesArgs),
    /// Rényi-2 entropy at every bond of every class model.
    Entropy(EntropyArgs),
    /// Train and test the generative classifier against both baselines.
    Compare(CompareArgs),
}

impl Command {
    pub fn run_args(&self) -> &RunArgs {
        match self {
            Command::Ingest(a) => &a.run,
            Command::Train(a) => &a.run,
            Command::TrainDisc(a) => &a.run,
            Command::Classify(a) | Command::Eval(a) => &a.run,
            Command::Distances(a) => &a.run,
            Command::Entropy(a) => &a.run,
            Command::Compare(a) => &a.run,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory for all outputs.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
    /// key=value file of defaults; flags on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// IDX image file (optionally gzipped).
    #[arg(long, requires = "labels", required_unless_present = "data")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Directory written by `ingest`; replaces the other data flags.
    #[arg(long, conflicts_with_all = ["images", "labels", "downsample", "per_class"])]
    pub data: Option<PathBuf>,
    /// Average-pooling factor.
    #[arg(long, default_value_t = 1)]
    pub downsample: usize,
    /// Keep at most this many samples per class.
    #[arg(long)]
    pub per_class: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 16)]
    pub chi: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 50)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Samples per sweep; 0 uses the full training set.
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
    /// Model initialization and batching seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

impl TrainFlags {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            chi: self.chi,
            alpha: self.alpha,
            beta: self.beta,
            max_sweeps: self.max_sweeps,
            convergence_tol: self.tol,
            batch_size: self.batch,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct IngestArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Subsampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Subsampling seed.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Train only this class.
    #[arg(long)]
    pub class: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainDiscArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory of `train` or `train-disc`.
    #[arg(long)]
    pub models: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Use only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Raw,
    Hilbert,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Raw => "raw",
            Space::Hilbert => "hilbert",
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DistancesArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub space: Space,
    /// Subsampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory of `train`.
    #[arg(long)]
    pub models: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub test_images: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    /// Use only the first N test samples.
    #[arg(long)]
    pub test_limit: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Sweep cap for the discriminative baseline (defaults to --max-sweeps).
    #[arg(long)]
    pub disc_max_sweeps: Option<usize>,
    /// Initial step for the discriminative baseline (defaults to --alpha).
    #[arg(long)]
    pub disc_alpha: Option<f64>,
}

/// Expands `--config FILE` into flags placed right after the subcommand, so
/// that later command-line occurrences override them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let man = Manifest::read(PathBuf::from(&path))
        .map_err(|e| format!("config {}: {e}", PathBuf::from(&path).display()))?;
    let Some(sub) = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
    else {
        return Ok(argv);
    };
    let at = sub + 2;
    let mut injected = Vec::new();
    for (k, v) in man.entries() {
        let flag = format!("--{}", k.replace('_', "-"));
        match v.as_str() {
            "true" => injected.push(OsString::from(flag)),
            "false" => {}
            _ => {
                injected.push(OsString::from(flag));
                injected.push(OsString::from(v));
            }
        }
    }
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}
