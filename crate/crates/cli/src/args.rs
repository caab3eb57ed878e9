use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "probe", version, about = "Reliability classifier over frozen MLIP embeddings")]
pub struct Cli {
    /// Worker threads for the numeric kernels; 1 is fully deterministic.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// TOML config file, or a run manifest to replay. Flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest (defaults next to the primary output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Container tooling.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Fit a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Per-molecule class probabilities.
    Infer(InferArgs),
    /// Selective-prediction, error-binned and calibration report.
    Eval(EvalArgs),
    /// Attention importance per atom.
    Importance(ImportanceArgs),
    /// Molecular embeddings for external projection.
    ExportEmbeddings(ExportArgs),
    /// Scaled ensemble-σ baseline from a predictions CSV.
    BaselineEnsemble(EnsembleArgs),
    /// Retrospective active-learning simulation.
    AlSim(AlArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Write a synthetic clustered dataset.
    GenSynthetic(GenArgs),
    /// Print header and summary statistics of a container.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Emit the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Standard,
    Tiny,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Separate validation set; otherwise `--data` is split.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub percentile: Option<f64>,
    /// `raw` or `per-atom`.
    #[arg(long)]
    pub error_mode: Option<String>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for report.json, report.txt and curve CSVs.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    #[arg(long)]
    pub error_bins: Option<usize>,
    #[arg(long)]
    pub accurate_threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hc_cutoffs: Option<Vec<f64>>,
    #[arg(long)]
    pub calibration_bins: Option<usize>,
    /// Ensemble predictions CSV (`mol_id,n_atoms,e_ref,pred_0,…`) for the σ baseline.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingFormat {
    Csv,
    Binary,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbeddingFormat::Csv)]
    pub format: EmbeddingFormat,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Boundary in kcal/mol; otherwise the `--percentile` of member-0 errors.
    #[arg(long)]
    pub boundary: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    pub percentile: f64,
    #[arg(long, default_value = "raw")]
    pub error_mode: String,
}

#[derive(Debug, Args)]
pub struct AlArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// e.g. `probe,random,ensemble:4`.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub initial_size: Option<usize>,
    #[arg(long)]
    pub acquisition_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
}
