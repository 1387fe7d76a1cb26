use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("palm normal has zero length")]
    ZeroNormal,
    #[error("window expects {expected} frames, got {got}")]
    WrongWindowLength { expected: usize, got: usize },
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("padding target {target} is smaller than input length {len}")]
    TargetTooSmall { target: usize, len: usize },
    #[error("unknown posture `{0}`")]
    UnknownPosture(String),
    #[error("illegal transition {from} -> {to}: transitions must pass through GoStraight")]
    IllegalTransition { from: String, to: String },
    #[error("bad scenario: {0}")]
    BadScenario(String),

    #[error("dictionary columns have different lengths ({expected} vs {got})")]
    RaggedColumns { expected: usize, got: usize },
    #[error("class `{0}` has no columns")]
    EmptyClass(String),
    #[error("label `{0}` is not a declared class")]
    UnknownClass(String),
    #[error("column {0} has (near) zero norm")]
    ZeroColumn(usize),
    #[error("gram matrix is singular; use lambda > 0 or a full-rank dictionary")]
    SingularGram,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix too small: need n >= {needed}, got {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("cluster {cluster} has {size} columns, {needed} requested")]
    ClusterTooSmall { cluster: usize, size: usize, needed: usize },
    #[error("missing training recording: {0}")]
    MissingRecording(String),
    #[error("unexpected clustering structure: {0}")]
    ClusterStructure(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("model format error: {0}")]
    ModelFormat(String),
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("no model loaded")]
    ModelMissing,
    #[error("bad message: {0}")]
    BadMessage(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end: 1 usage, 2 data
    /// error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidParameter(_) => 1,
            Error::SingularGram
            | Error::ZeroColumn(_)
            | Error::NonFiniteInput
            | Error::ZeroNormal
            | Error::ClusterStructure(_) => 3,
            _ => 2,
        }
    }

    /// Short machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFiniteInput => "NonFiniteInput",
            Error::ZeroNormal => "ZeroNormal",
            Error::WrongWindowLength { .. } => "WrongWindowLength",
            Error::TooShort { .. } => "TooShort",
            Error::TargetTooSmall { .. } => "TargetTooSmall",
            Error::UnknownPosture(_) => "UnknownPosture",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::BadScenario(_) => "BadScenario",
            Error::RaggedColumns { .. } => "RaggedColumns",
            Error::EmptyClass(_) => "EmptyClass",
            Error::UnknownClass(_) => "UnknownClass",
            Error::ZeroColumn(_) => "ZeroColumn",
            Error::SingularGram => "SingularGram",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::TooSmall { .. } => "TooSmall",
            Error::ClusterTooSmall { .. } => "ClusterTooSmall",
            Error::MissingRecording(_) => "MissingRecording",
            Error::ClusterStructure(_) => "ClusterStructure",
            Error::Parse { .. } => "Parse",
            Error::ModelFormat(_) => "ModelFormat",
            Error::Checksum(_) => "Checksum",
            Error::ModelMissing => "ModelMissing",
            Error::BadMessage(_) => "BadMessage",
            Error::Usage(_) => "Usage",
            Error::Io { .. } => "Io",
        }
    }
}
