use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pan_core::CombineFn;

use crate::config::{AttributeSource, EvalTask, ModelKind, SupervisionKind};

#[derive(Debug, Parser)]
#[command(name = "pan", version, about = "Train and evaluate pairwise attribute-informed similarity networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset bundle
    Gen(GenArgs),
    /// Train a model on a bundle
    Train(TrainArgs),
    /// Evaluate checkpoints on a bundle
    Eval(EvalArgs),
    /// Compare tape gradients against central differences
    Gradcheck(GradcheckArgs),
    /// Train and evaluate over a grid of values
    Sweep(SweepArgs),
}

pub fn parse_fa(s: &str) -> Result<CombineFn, String> {
    s.parse().map_err(|e: pan_core::PanError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    CompatManifest,
    Fewshot,
    Separable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Identity,
    Mlp,
    Gcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    SingleBatch,
    Minibatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidationArg {
    None,
    PairAuc,
    FewShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Lambda,
    Conditions,
    Fa,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory for the bundle
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub attrs: Option<usize>,
    #[arg(long)]
    pub manifestations: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub background_noise: Option<f64>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub categories: Option<usize>,
    /// Defaults to $PAN_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_fa)]
    pub fa: Option<CombineFn>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of similarity conditions
    #[arg(long)]
    pub conditions: Option<usize>,
    #[arg(long, value_enum)]
    pub supervision: Option<SupervisionKind>,
    /// Unsupervised conditions appended in hybrid mode
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub layer_dropout: Option<f64>,
    #[arg(long)]
    pub edge_dropout: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub relevance: Option<OnOff>,
    /// Train with every attribute label masked
    #[arg(long, conflicts_with = "random_labels")]
    pub no_attributes: bool,
    /// Replace labeled attribute values with coin flips
    #[arg(long)]
    pub random_labels: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub pairs_per_class: Option<usize>,
    #[arg(long, value_enum)]
    pub validation: Option<ValidationArg>,
    #[arg(long)]
    pub validation_every: Option<usize>,
    /// Triplet margin for the siamese baseline
    #[arg(long)]
    pub margin: Option<f64>,
    /// Defaults to $PAN_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    pub fn attribute_source(&self) -> Option<AttributeSource> {
        if self.no_attributes {
            Some(AttributeSource::None)
        } else if self.random_labels {
            Some(AttributeSource::Random)
        } else {
            None
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Bundle directory
    #[arg(long)]
    pub bundle: PathBuf,
    /// Run directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalOptions {
    /// Split to evaluate on
    #[arg(long)]
    pub split: Option<String>,
    /// Candidates per set-completion question
    #[arg(long)]
    pub choices: Option<usize>,
    #[arg(long)]
    pub way: Option<usize>,
    #[arg(long)]
    pub shot: Option<usize>,
    #[arg(long)]
    pub query: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Held-out positives (and as many negatives) for pair tasks
    #[arg(long)]
    pub eval_pairs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub task: EvalTask,
    /// Checkpoint file; repeat for rank-report
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pairwise label function for attr-map
    #[arg(long, value_parser = parse_fa)]
    pub fa: Option<CombineFn>,
    #[command(flatten)]
    pub options: EvalOptions,
    /// Defaults to $PAN_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Comma-separated sizes: d (features), M (conditions), n (items), h (hidden width)
    #[arg(long, default_value = "d=6,M=4")]
    pub dims: String,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, hide = true)]
    pub inject_sign_error: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Comma-separated values along the axis
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Metric computed after each training run
    #[arg(long, value_enum, default_value = "pair-accuracy")]
    pub task: EvalTask,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training config file; flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: EvalOptions,
}
