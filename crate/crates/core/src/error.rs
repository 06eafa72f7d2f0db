use std::path::PathBuf;

use thiserror::Error;

use crate::text::TokenId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("token id {0} is not in the vocabulary")]
    InvalidTokenId(TokenId),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid model table: {0}")]
    ModelTable(String),

    #[error("prefix must start with BOS")]
    MissingBos,

    #[error("target must start with BOS and end with EOS")]
    IncompleteTarget,

    /// A remote backend could not be reached or answered with an error.
    /// Callers may retry.
    #[error("request to {endpoint} failed: {cause}")]
    Transport { endpoint: String, cause: String },

    #[error("malformed response from {endpoint}: {cause}")]
    Protocol { endpoint: String, cause: String },

    #[error("enumeration guard violated: {0}")]
    EnumerationGuard(String),

    #[error("invalid decoding configuration: {0}")]
    Config(String),

    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: String,
        expected: String,
    },

    #[error("language '{0}' is not supported by the embedding provider")]
    UnsupportedLanguage(String),

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {skipped} of {total} lines are malformed (more than 10%)")]
    TooManyMalformed {
        path: PathBuf,
        skipped: usize,
        total: usize,
    },

    #[error("record at line {0} has no similarity score")]
    Unscored(usize),

    #[error("language '{0}' cannot be scored for similarity; use the 'random' or 'all' filtering policy")]
    ScoringUnsupported(String),

    #[error("need at least {needed} records for the requested splits, got {available}")]
    InsufficientRecords { needed: usize, available: usize },

    #[error("hypotheses and references differ in length: {hyps} vs {refs}")]
    LengthMismatch { hyps: usize, refs: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
