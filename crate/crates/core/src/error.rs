//! Crate-wide error types and their mapping onto CLI exit codes.

use thiserror::Error;

/// Errors raised by tensor and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {op} expects compatible shapes, got {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a 2-d tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("row {row} is fully masked; softmax over an empty support is undefined")]
    DegenerateRow { row: usize },
    #[error("row {row} has zero L2 norm; cannot normalize")]
    ZeroNormRow { row: usize },
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward requires a loss tracked on this tape")]
    UntrackedLoss,
    #[error("value count {values} does not match shape {shape:?}")]
    ShapeValueCount { shape: Vec<usize>, values: usize },
    #[error("leaky_relu slope must lie in (0,1), got {0}")]
    InvalidSlope(f64),
    #[error("index {index} out of bounds for {rows} rows")]
    RowIndexOutOfBounds { index: usize, rows: usize },
}

/// Errors raised while loading, generating, or transforming datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("{file}: ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        file: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{file}: non-numeric cell at row {row}, column {column}: {value:?}")]
    NonNumericCell {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("sample count mismatch: {file} has {found} samples, labels have {expected}")]
    SampleCountMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("{file}: sample id {id:?} does not match the label file")]
    SampleIdMismatch { file: String, id: String },
    #[error("{file}: non-finite value at row {row}, column {column}")]
    NonFiniteValue {
        file: String,
        row: usize,
        column: String,
    },
    #[error("label {label} out of range for {classes} classes (sample {id:?})")]
    LabelOutOfRange {
        id: String,
        label: usize,
        classes: usize,
    },
    #[error("class {class:?} has {count} samples; need at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },
    #[error("dataset needs at least two omics, found {0}")]
    TooFewOmics(usize),
    #[error("invalid synthetic dataset sizes: {0}")]
    InvalidSizes(String),
    #[error("feature names differ between train and apply matrices of omics {0:?}")]
    FeatureSetMismatch(String),
    #[error("test fraction must lie in (0,1), got {0}")]
    InvalidTestFraction(f64),
    #[error("missing rate must lie in [0,1], got {0}")]
    InvalidMissingRate(f64),
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
    #[error("{file}: malformed metadata: {reason}")]
    BadMeta { file: String, reason: String },
    #[error("omics selector {0:?} does not name any omics in the dataset")]
    UnknownOmics(String),
}

/// Errors raised during sample-graph construction.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("sample {id:?} is an all-zero vector; cosine similarity is undefined")]
    ZeroSampleVector { id: String },
    #[error("zero vector passed to cosine similarity")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Errors raised by model construction and training.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite loss at epoch {epoch} ({context})")]
    NonFiniteLoss { epoch: usize, context: String },
    #[error("checkpoint parameter {name:?} has shape {found:?}, expected {expected:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint is missing parameter {0:?}")]
    CheckpointMissing(String),
    #[error("cross-omics distillation needs at least two omics, got {0}")]
    TooFewOmicsForDistill(usize),
    #[error("empty training set")]
    EmptyTrainSet,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Errors raised by metric computation.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction/label lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("AUC is undefined: labels contain a single class")]
    SingleClassAuc,
    #[error("binary metrics require labels in {{0,1}}, found class {0}")]
    NotBinary(usize),
    #[error("no samples to evaluate")]
    Empty,
}

/// Errors raised by checkpoint serialization.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
    #[error("{file}: bad magic bytes; not a checkpoint file")]
    BadMagic { file: String },
    #[error("{file}: unsupported checkpoint version {version}")]
    BadVersion { file: String, version: u32 },
    #[error("{file}: truncated or corrupt checkpoint ({reason})")]
    Corrupt { file: String, reason: String },
}

/// Errors raised while reading configuration files.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
    #[error("{file} line {line}: expected `key = value`, got {text:?}")]
    BadLine {
        file: String,
        line: usize,
        text: String,
    },
    #[error("{file} line {line}: unknown key {key:?}")]
    UnknownKey {
        file: String,
        line: usize,
        key: String,
    },
    #[error("{file} line {line}: cannot parse {key} value {value:?}: {reason}")]
    BadValue {
        file: String,
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Top-level error, carrying the CLI exit-code convention:
/// 1 usage, 2 data, 3 numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code for the CLI: 1 usage error, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Data(_) | Error::Graph(_) | Error::Checkpoint(_) | Error::Io { .. } => 2,
            Error::Tensor(_) | Error::Metrics(_) => 3,
            Error::Model(e) => match e {
                ModelError::CheckpointShape { .. } | ModelError::CheckpointMissing(_) => 2,
                _ => 3,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
