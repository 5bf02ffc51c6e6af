//! `somnoscore`: synthesize data, split, train, evaluate, ensemble and
//! report from the command line.

mod commands;
mod run_manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use somnoscore::sigdata::SplitPart;
use somnoscore::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(
    name = "somnoscore",
    version,
    about = "Sleep-stage scoring with a compact separable CNN"
)]
struct Cli {
    /// Worker threads for per-example work; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SeedArg {
    #[arg(long, env = "SOMNOSCORE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Split a dataset's patients into train / val / test.
    Split(SplitArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Compare ensembles of checkpoints, or score one ensemble file.
    Ensemble(EnsembleArgs),
    /// Print parameter and operation counts for a model.
    Params(ParamsArgs),
    /// Render SVG figures from eval/train outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub patients: usize,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    pub excluded_prob: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.1,0.2")]
    pub ratios: String,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output split file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Input signals, e.g. `C4A1,EMG` or a model name such as `EEG_EMG`.
    #[arg(long)]
    pub signals: String,
    #[arg(long, default_value_t = 4)]
    pub patients_per_batch: usize,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    /// Scale every recording to zero mean, unit variance per channel.
    #[arg(long)]
    pub zscore: bool,
    /// Model config (JSON); defaults to the reference architecture.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataSelection {
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to one part of a split file; without it every patient is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long = "split-part", default_value = "test")]
    pub part: SplitPart,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSelection,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Comma-separated checkpoints to combine.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "spec",
        conflicts_with = "spec"
    )]
    pub models: Vec<PathBuf>,
    /// Score the ensemble described by this `ensemble.json` instead.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Ensemble sizes to enumerate (default: 1 up to 3).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub data: DataSelection,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub signals: String,
    /// Model config (JSON); defaults to the reference architecture.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write `cost_report.json` and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding `metrics.json`, `history.csv` and/or `hypnogram.csv`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => match e.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        },
        None => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Params(a) => commands::params(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
