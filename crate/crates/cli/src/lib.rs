//! Command-line experiments: corpus preparation, training, grid search,
//! cross-validation, evaluation, attribution and embedding export.
//!
//! Every command that writes files also writes `manifest.json` in its
//! output directory, recording the arguments, effective configuration,
//! input checksums and output checksums. Running the recorded arguments
//! again with another `--out` reproduces the numeric outputs byte for byte.

mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use contradv::advtrain::{FgsmDirection, Mode, TrainError};
use contradv::dataio::{DataError, LabelScheme};
use contradv::encoder::ModelError;
use contradv::explain::ExplainError;
use contradv::textprep::TextError;

pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input from the user: exit code 1.
    #[error("{0}")]
    User(String),
    /// Anything else: exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::LabelOutOfRange { .. } | TrainError::EmptySet(_) => {
                CliError::User(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Steps | ExplainError::Target { .. } | ExplainError::Projection(_) => {
                CliError::User(e.to_string())
            }
            ExplainError::Model(m) => m.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "contradv",
    version,
    about = "Contrastive adversarial training experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a corpus and build its vocabulary.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic labelled corpus.
    Synth(SynthArgs),
    /// Train one model and evaluate it on the held-out split.
    Train(TrainArgs),
    /// Train every cell of a hyperparameter grid and rank the cells.
    Gridsearch(GridArgs),
    /// Stratified k-fold cross-validation.
    Kfold(KfoldArgs),
    /// Score a saved model on a corpus.
    Eval(EvalArgs),
    /// Integrated-gradients token attributions.
    Attribute(AttributeArgs),
    /// 2D PCA of h_CLS and projection-head outputs.
    EmbedViz(EmbedVizArgs),
    /// Counts per disease and label.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_direction)]
    pub fgsm_direction: Option<FgsmDirection>,
    /// `binary` (health mention vs. rest) or `three_class`.
    #[arg(long, default_value = "binary", value_parser = parse_scheme)]
    pub scheme: LabelScheme,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: TrainError| e.to_string())
}

fn parse_direction(s: &str) -> Result<FgsmDirection, String> {
    s.parse().map_err(|e: TrainError| e.to_string())
}

fn parse_scheme(s: &str) -> Result<LabelScheme, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
    /// Drop tokens seen fewer times than this from the vocabulary.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated values; each axis defaults to the full grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    /// Cells trained at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct KfoldArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary file; defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Integration steps.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    /// Number of corpus examples to explain, from the start.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// `pad` or `zero`.
    #[arg(long, default_value = "pad")]
    pub baseline: String,
}

#[derive(Debug, Args)]
pub struct EmbedVizArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on user error, 2 on internal error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let rest = argv.get(1..).unwrap_or_default();
    match commands::dispatch(cli.command, rest) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
