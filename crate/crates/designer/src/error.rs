use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("record {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} has a zero vector and cannot be normalized")]
    ZeroVector(String),
    #[error("record {0:?} has no tokens")]
    EmptyTokens(String),
    #[error("anchor {id:?} has {tokens} tokens, over the budget of {budget}")]
    AnchorTooLong { id: String, tokens: usize, budget: usize },
    #[error("unknown sentence id {0:?}")]
    UnknownId(String),
    #[error("batch size must be even and positive, got {0}")]
    OddBatchSize(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DesignError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DesignError + '_ {
    move |source| DesignError::Io { path: path.to_path_buf(), source }
}
