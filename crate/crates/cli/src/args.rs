use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "hsmp",
    version,
    about = "Organ-finding label extraction from radiology reports"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Label schema JSON (organs and findings). Defaults to the built-in grid.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Prompt template set JSON. Defaults to the built-in English templates.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    /// Section header lexicon JSON.
    #[arg(long, global = true)]
    pub headers: Option<PathBuf>,
    #[arg(short, long, global = true)]
    #[serde(skip)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Build self-supervised Findings/Impression match pairs.
    Pairgen(PairgenArgs),
    /// Stratified train/test split over the binary label matrix.
    Split(SplitArgs),
    /// Build the supervised prompt set for fine-tuning.
    TuneSet(TuneSetArgs),
    /// Score reports flat, hierarchically, or both.
    Infer(InferArgs),
    /// Score prediction files against gold labels.
    Eval(EvalArgs),
    /// Organ involvement, stratified prevalence and label correlation tables.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 476)]
    pub n_reports: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthesis config JSON; command-line values override its count and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also store the generating sections in each record.
    #[arg(long)]
    pub emit_sections: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PairgenArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative pairs per positive; fractional values round up.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Allow negatives drawn from the same patient's other reports.
    #[arg(long)]
    pub no_patient_blocking: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.66)]
    pub train_fraction: f64,
}

/// Restricts a command to one side of a split.
#[derive(Debug, Args, Serialize)]
pub struct Subset {
    /// Split file written by `hsmp split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::Test)]
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Train,
    Test,
}

/// Which cells to predict.
#[derive(Debug, Args, Serialize)]
pub struct TargetArgs {
    /// JSON array of cell ids. Overrides --min-positives.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Keep cells with at least this many gold positives in the corpus.
    #[arg(long, default_value_t = 15)]
    pub min_positives: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneSetArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub subset: Subset,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap finding-level negatives per report (all negatives when absent).
    #[arg(long)]
    pub max_negatives: Option<usize>,
    /// Omit scan- and organ-level instances.
    #[arg(long)]
    pub no_hierarchy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Answers from the corpus gold labels, optionally with flip noise.
    Oracle,
    /// HTTP scoring service.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Flat,
    Hierarchical,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub subset: Subset,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, value_enum, default_value_t = ScorerKind::Oracle)]
    pub scorer: ScorerKind,
    #[arg(long, env = "HSMP_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Oracle flip probability.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Oracle noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest tolerated fraction of reports that fail to score.
    #[arg(long, default_value_t = 0.0)]
    pub max_failure_fraction: f64,
    /// Memoize scores of repeated pairs.
    #[arg(long)]
    pub cache: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Gold-annotated corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Prediction files to score; with two or more, methods are compared
    /// by paired t-tests over per-label metrics.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub targets: TargetArgs,
    /// Compute AUC from the stored scores.
    #[arg(long)]
    pub auc: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Predictions to analyze instead of the corpus gold labels.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub targets: TargetArgs,
    /// Count each patient once, at their latest visit.
    #[arg(long)]
    pub per_patient: bool,
}
