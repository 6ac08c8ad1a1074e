use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "decal", version = env!("DECAL_BUILD_ID"), about = "Knowledge graph embeddings in degenerate Clifford algebras")]
pub struct Cli {
    /// Worker threads for signature sweeps (defaults to all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one signature and evaluate it on every split.
    Train(TrainCmd),
    /// Search the (p, q, r) lattice for the best validation MRR.
    Search(SearchCmd),
    /// Evaluate a saved model on one split.
    Evaluate(EvaluateCmd),
    /// Export concatenated (head, relation, tail) rows of a Cl_{1,1,1} model.
    ExportFeatures(ExportCmd),
    /// Print dataset statistics as JSON.
    Stats(StatsCmd),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayCmd),
}

/// Training hyperparameters shared by `train` and `search`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Clip the global gradient norm of every step.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Stop after this many epochs without a training-loss improvement.
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "decal-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Every (p, q, r) with p + q + r <= d.
    Les,
    /// Every (p, q, r) with 1 + p + q + r dividing d.
    Gsdc,
    /// Greedy neighbourhood search from (1, 1, 1).
    Gs,
}

#[derive(Debug, Args)]
pub struct SearchCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Train each candidate for this many epochs instead of the full protocol.
    #[arg(long)]
    pub budget_epochs: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "decal-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Directory for the report and manifest; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct ExportCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FeatureFormat,
    #[arg(long, default_value = "decal-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayCmd {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
