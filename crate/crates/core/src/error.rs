use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // tensors and the tape
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid shape {0:?}: every dimension must be positive")]
    InvalidShape(Vec<usize>),
    #[error("division by zero at element {0}")]
    DivisionByZero(usize),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss is not connected to any tensor that requires a gradient")]
    DetachedLoss,
    #[error("backward already ran on this tape")]
    TapeConsumed,
    #[error("function is not deterministic: two evaluations differ ({0} vs {1})")]
    NonDeterministicFunction(f64, f64),

    // layers
    #[error("convolution output would be empty: {0}")]
    EmptyOutput(String),
    #[error("batch too small for batch norm in train mode: {0} values per channel")]
    BatchTooSmall(usize),
    #[error("pool window {window} larger than input {height}x{width}")]
    WindowTooLarge { window: usize, height: usize, width: usize },

    // models
    #[error("unsupported input size {0}; expected one of 32, 64, 128, 512")]
    UnsupportedInputSize(usize),
    #[error("model does not end in a flattened feature vector")]
    NoFeatureVector,
    #[error("unknown freeze policy {0:?}")]
    UnknownPolicy(String),
    #[error("unknown architecture {0:?}")]
    UnknownArchitecture(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    // data
    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel { path: PathBuf, line: usize, label: String },
    #[error("{path}:{line}: duplicate path {entry:?}")]
    DuplicatePath { path: PathBuf, line: usize, entry: String },
    #[error("{0}: manifest has no records")]
    EmptyManifest(PathBuf),
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },
    #[error("{path}: unsupported image format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{path}: corrupt image: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("image is {0}x{1}, expected a square")]
    NotSquare(usize, usize),
    #[error("image is {actual}x{actual}, expected {expected}x{expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("label {0:?} is too small to split")]
    LabelTooSmall(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // training and evaluation
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("confusion matrix row {0} has no samples")]
    EmptyRow(usize),
    #[error("unknown feature-map selector {0:?}")]
    UnknownSelector(String),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("cannot write to {path}: {source}")]
    UnwritableDirectory { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
