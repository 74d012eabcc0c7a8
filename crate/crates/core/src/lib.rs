//! Structured extraction of organ-finding labels from sectioned radiology
//! reports by prompt-based pair scoring.
//!
//! A report's Findings section is paired with verbalized hypotheses
//! ("There is stenosis in the terminal ileum.") and a [`Scorer`] returns a
//! match probability for each pair. [`InferenceEngine`] runs either flat
//! inference (one prompt per target cell) or hierarchical inference
//! (scan → organ → finding with pruning), and [`evaluation`] scores the
//! resulting predictions.

pub mod analytics;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod labels;
pub mod parsing;
pub mod prompting;
pub mod schema;
pub mod scoring;
pub mod smp;
pub mod split;
pub mod synth;

pub use corpus::{load_corpus, save_corpus, Corpus, Modality, Report, Sex};
pub use error::{
    AnalyticsError, CorpusError, EvalError, InferenceError, LabelError, PromptError, SchemaError,
    ScoreError, SegmentError, SmpError, SynthError,
};
pub use evaluation::{
    bh_correct, confusion, evaluate, label_metrics, macro_aggregate, paired_tests, ConfusionCounts,
    LabelMetrics, MacroMetrics, Metric,
};
pub use inference::{
    CellScore, EfficiencyReport, HierarchyTree, InferenceConfig, InferenceEngine, InferenceMode,
    InferenceTrace, PredictionRow,
};
pub use labels::{filter_targets, recode_binary, BinaryLabelMatrix, RawLabel};
pub use parsing::{segment_report, HeaderLexicon, SectionPair};
pub use prompting::{PairInput, PromptLevel, PromptNode, TemplateSet, Verbalizer};
pub use schema::{CellId, LabelSchema};
pub use scoring::{
    CachedScorer, OracleConfig, OracleScorer, RemoteConfig, RemoteScorer, ScoreRequest,
    ScoreResponse, Scorer, ScorerInfo, TokenizerSpec,
};
pub use smp::{generate_smp_pairs, SmpOptions, SmpPair};
pub use split::{stratified_split, SplitAssignment};
pub use synth::{generate_corpus, SynthConfig};
