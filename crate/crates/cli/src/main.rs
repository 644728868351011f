//! `transa`: ingest triple datasets, train translation embeddings with
//! adaptive margins, and evaluate them.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigLayer;

/// An error in how the tool was invoked rather than in the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A numeric failure that already left a recoverable checkpoint behind.
#[derive(Debug)]
pub struct NumericError(pub String);

impl std::fmt::Display for NumericError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericError {}

#[derive(Parser, Debug)]
#[command(
    name = "transa",
    version,
    about = "Translation embeddings with locally adaptive margins"
)]
struct Cli {
    /// Worker threads for margin refresh and evaluation
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse raw triple files into a graph directory
    Ingest(IngestArgs),
    /// Split a graph into k subgraphs by relation
    Partition(PartitionArgs),
    /// Train a model
    Train(TrainArgs),
    /// Evaluate a model by link prediction or triple classification
    Eval(EvalArgs),
    /// Risk diagnostics and the generalization bound of a trained model
    Bound(BoundArgs),
    /// Train one fixed-margin model per margin and compare
    Sweep(SweepArgs),
    /// Write named embeddings and the margin table of a model
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Names)]
    pub format: Format,
    /// Valid/test lines carry a fourth column labeling them 1 or -1
    #[arg(long)]
    pub labeled: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Names,
    Ids,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(short, long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub layer: ConfigLayer,
    /// Start from a published setting: wn18-lp, fb15k-lp, wn11-tc or fb13-tc
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Select learning rate, dimension and batch size on the validation split
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Link prediction
    Lp,
    /// Triple classification
    Tc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeKind {
    PositionCompatible,
    Uniform,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Lp)]
    pub task: Task,
    /// Cutoffs for hits@k
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 10])]
    pub hits: Vec<usize>,
    /// Also report mean ranks per relation
    #[arg(long)]
    pub per_relation: bool,
    /// How to build negatives when the graph has no labeled ones
    #[arg(long, value_enum, default_value_t = NegativeKind::PositionCompatible)]
    pub negatives: NegativeKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// One or more margins, comma-separated
    #[arg(long = "margin", value_delimiter = ',', required = true)]
    pub margins: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Seed of the corruptions paired with training triples
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub layer: ConfigLayer,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Margins to train with, comma-separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub margins: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub corruption_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Compute entity margins exactly instead of by active-set sampling
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 0.1)]
    pub active_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub active_rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub active_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return 1;
        }
        if cause.is::<NumericError>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<transa_core::Error>() {
            return match e {
                transa_core::Error::Argument(_) => 1,
                transa_core::Error::NonFinite { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = (|| {
        if cli.threads == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| UsageError(format!("thread pool: {e}")))?;
        match cli.command {
            Command::Ingest(a) => commands::ingest(&a),
            Command::Partition(a) => commands::partition(&a),
            Command::Train(a) => commands::train(&a, cli.threads),
            Command::Eval(a) => commands::eval(&a),
            Command::Bound(a) => commands::bound(&a),
            Command::Sweep(a) => commands::sweep(&a, cli.threads),
            Command::Export(a) => commands::export(&a),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
