use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KifaError>;

/// Every failure the toolkit can report. Each variant maps to a stable
/// string code (see [`KifaError::code`]) that scripts can match on.
#[derive(Debug, Error)]
pub enum KifaError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} columns, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    BadValue { line: usize, reason: String },
    #[error("line {line}: non-finite coordinate")]
    NonFiniteValue { line: usize },
    #[error("sequence has {frames} frame(s); at least 2 are required")]
    TooShort { frames: usize },
    #[error("scale joints coincide in frame 0")]
    DegenerateScale,
    #[error("joint index {index} out of range for {joints} joints")]
    JointOutOfRange { index: usize, joints: usize },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("no training samples for action {0}")]
    EmptyClass(String),
    #[error("invalid attention weights: {0}")]
    InvalidAttention(String),
    #[error("temporal fuzzy entropy is zero; sample cannot be scored")]
    ZeroTemporalEntropy,
    #[error("fuzzifier has not seen any sample yet")]
    ColdStart,
    #[error("{0} joint distribution is not formed yet")]
    UndefinedCategory(&'static str),
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    IoFailure(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KifaError {
    pub fn code(&self) -> &'static str {
        match self {
            KifaError::MalformedHeader(_) => "E_MALFORMED_HEADER",
            KifaError::MalformedRow { .. } => "E_MALFORMED_ROW",
            KifaError::BadValue { .. } => "E_BAD_VALUE",
            KifaError::NonFiniteValue { .. } => "E_NON_FINITE",
            KifaError::TooShort { .. } => "E_TOO_SHORT",
            KifaError::DegenerateScale => "E_DEGENERATE_SCALE",
            KifaError::JointOutOfRange { .. } => "E_JOINT_RANGE",
            KifaError::InsufficientSamples(_) => "E_INSUFFICIENT_SAMPLES",
            KifaError::ShapeMismatch(_) => "E_SHAPE_MISMATCH",
            KifaError::NonFiniteLoss { .. } => "E_NON_FINITE_LOSS",
            KifaError::EmptyClass(_) => "E_EMPTY_CLASS",
            KifaError::InvalidAttention(_) => "E_INVALID_ATTENTION",
            KifaError::ZeroTemporalEntropy => "E_ZERO_TEMPORAL_ENTROPY",
            KifaError::ColdStart => "E_COLD_START",
            KifaError::UndefinedCategory(_) => "E_UNDEFINED_CATEGORY",
            KifaError::DegenerateTraining(_) => "E_DEGENERATE_TRAINING",
            KifaError::DegenerateData(_) => "E_DEGENERATE_DATA",
            KifaError::Config(_) => "E_CONFIG",
            KifaError::Format(_) | KifaError::Json(_) => "E_FORMAT",
            KifaError::Io { .. } | KifaError::IoFailure(_) => "E_IO",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KifaError::Io {
            path: path.into(),
            source,
        }
    }
}
