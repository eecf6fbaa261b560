use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("word `{word}` is not in the `{language}` vocabulary")]
    WordNotFound { language: String, word: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corpus format error at line {line}: {message}")]
    CorpusFormat { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("intersection of `{first}` and `{second}` has {available} concepts, need more than {required}")]
    IntersectionTooSmall {
        first: String,
        second: String,
        available: usize,
        required: usize,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("rank deficiency: requested rank {requested}, achievable rank {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("missing relevance entry for query `{0}`")]
    MissingRelevance(String),

    #[error("model format version error: {0}")]
    ModelVersion(String),

    #[error("model checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ModelChecksum { stored: u32, computed: u32 },

    #[error("model file truncated: {0}")]
    ModelTruncated(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable code identifying the error class, suitable for machine parsing.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "E_DIM",
            Error::UnknownLanguage(_) => "E_LANG",
            Error::WordNotFound { .. } => "E_OOV",
            Error::InvalidState(_) => "E_STATE",
            Error::InvalidArgument(_) => "E_ARG",
            Error::CorpusFormat { .. } => "E_CORPUS",
            Error::Split(_) | Error::IntersectionTooSmall { .. } => "E_SPLIT",
            Error::NumericalBreakdown(_) => "E_NUMERIC",
            Error::RankDeficient { .. } => "E_RANK",
            Error::UndefinedSimilarity(_) => "E_SIMILARITY",
            Error::MissingRelevance(_) => "E_RELEVANCE",
            Error::ModelVersion(_) => "E_MODEL_VERSION",
            Error::ModelChecksum { .. } => "E_MODEL_CHECKSUM",
            Error::ModelTruncated(_) => "E_MODEL_TRUNCATED",
            Error::ModelFormat(_) => "E_MODEL_FORMAT",
            Error::Io { .. } => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
