use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema must list exactly 6 organs, got {0}")]
    WrongOrganCount(usize),
    #[error("schema must list exactly 15 findings, got {0}")]
    WrongFindingCount(usize),
    #[error("invalid schema name {0:?}: names must be non-empty and contain no '.' or whitespace")]
    InvalidName(String),
    #[error("duplicate schema name {0:?}")]
    DuplicateName(String),
    #[error("malformed cell id {0:?}, expected <Organ>.<Finding>")]
    MalformedCellId(String),
    #[error("cell {0} is not part of the schema")]
    UnknownCell(String),
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("cannot parse schema: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("unknown label code {code} for cell {cell}")]
    UnknownCode { cell: String, code: u8 },
    #[error("label map covers {got} cells, expected {expected}")]
    WrongCellCount { expected: usize, got: usize },
    #[error("report {0} has no gold labels")]
    MissingGold(String),
    #[error("label matrix has no rows")]
    EmptyMatrix,
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// One rejected corpus line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} malformed record(s): {}", .0.len(), format_lines(.0))]
    Schema(Vec<LineError>),
    #[error("duplicate report_id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("cannot serialize record: {0}")]
    Serialize(String),
}

fn format_lines(lines: &[LineError]) -> String {
    lines
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SegmentError {
    #[error("report text is empty")]
    EmptyInput,
    /// The impression header is missing; `findings` holds the normalized text
    /// that can still be used as an inference premise.
    #[error("no impression header found")]
    NoImpressionHeader { findings: String },
    #[error("{0} section is empty")]
    EmptySection(&'static str),
    #[error("text is not valid UTF-8: {0}")]
    InvalidUtf8(String),
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {level} is invalid: {reason}")]
    BadTemplate { level: &'static str, reason: String },
    #[error("locale has no surface form for {0}")]
    MissingSurfaceForm(String),
    #[error("unknown organ {0:?}")]
    UnknownOrgan(String),
    #[error("organ is required for organ-level prompts and forbidden otherwise")]
    OrganMismatch,
    #[error("prompts for {0} and {1} render identically")]
    NotInjective(String, String),
    #[error("report {0}: {1}")]
    Report(String, String),
    #[error("hypothesis needs {needed} tokens but the scorer accepts at most {max}")]
    HypothesisTooLong { needed: usize, max: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("cannot read locale: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("transport failure: {message}")]
    Transport { message: String, retryable: bool },
    #[error("scorer returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response misaligned: {expected} pairs sent, {scores} scores and {tokens} token counts returned")]
    Misaligned {
        expected: usize,
        scores: usize,
        tokens: usize,
    },
    #[error("score {value} at position {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("batch of {size} exceeds the scorer limit of {max}")]
    BatchTooLarge { size: usize, max: usize },
    #[error("empty score request")]
    EmptyBatch,
    #[error("oracle has no gold labels for this premise")]
    UnknownPremise,
    #[error("oracle cannot map hypothesis {0:?} to a prompt node")]
    UnknownHypothesis(String),
    #[error("oracle configuration invalid: {0}")]
    BadOracle(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl ScoreError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ScoreError::Transport { retryable, .. } => *retryable,
            ScoreError::Status { status, .. } => *status == 503,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("report {report_id}: {source}")]
    Scorer {
        report_id: String,
        #[source]
        source: ScoreError,
    },
    #[error("report {report_id} has no usable findings text: {reason}")]
    NoPremise { report_id: String, reason: String },
    #[error("threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("parallelism must be at least 1")]
    BadParallelism,
    #[error("no target cells given")]
    NoTargets,
    #[error("target cell {0} is not part of the schema")]
    UnknownTarget(String),
    #[error("target cell {0} is listed twice")]
    DuplicateTarget(String),
    #[error("max failure fraction {0} must lie in [0, 1]")]
    BadFailureBound(f64),
    #[error("{failed} of {total} reports failed (allowed fraction {allowed}); first: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        allowed: f64,
        first: String,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("p-value {value} at position {index} is outside [0, 1]")]
    BadPValue { index: usize, value: f64 },
    #[error("no gold row for prediction {0}")]
    MissingGold(String),
    #[error("cell {cell} missing in row {report_id}")]
    MissingCell { report_id: String, cell: String },
}

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no predictions supplied")]
    Empty,
    #[error("at least two reports are needed, got {0}")]
    TooFew(usize),
    #[error("no demographics for report {0}")]
    MissingDemographics(String),
    #[error("cell {0} is not part of the schema")]
    UnknownCell(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

#[derive(Debug, Error)]
pub enum SmpError {
    #[error("need at least 2 reports with both sections, found {0}")]
    TooFewReports(usize),
    #[error("negatives_per_positive must be positive, got {0}")]
    BadRatio(f64),
    #[error("report {report_id} has only {available} eligible negative partners, {needed} needed")]
    InsufficientNegatives {
        report_id: String,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("n_reports must be at least 1")]
    NoReports,
    #[error("prevalence {value} for {cell} is outside [0, 1]")]
    BadPrevalence { cell: String, value: f64 },
    #[error("invalid synth configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}
