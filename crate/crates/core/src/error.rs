use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed input at line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("filter leaves no probability mass")]
    FilterEmpty,

    #[error("corpus too short: {0}")]
    CorpusTooShort(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch (checkpoint {checkpoint}, vocabulary {vocab})")]
    VocabMismatch { checkpoint: String, vocab: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
