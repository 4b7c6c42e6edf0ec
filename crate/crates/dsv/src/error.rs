use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DsvError>;

#[derive(Debug, Error)]
pub enum DsvError {
    #[error("empty {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at vector {index}, component {component}")]
    NonFinite { index: usize, component: usize },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("zero train-to-augmented distance; the augmentation does not move the embeddings")]
    DegenerateBase,

    #[error("zero kernel bandwidth: all pooled points coincide")]
    ZeroBandwidth,

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("labels must contain both classes")]
    SingleClass,

    #[error("no evidence: all paired differences are zero")]
    NoEvidence,

    #[error("no valid candidate: {}", .0.join("; "))]
    NoValidCandidate(Vec<String>),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DsvError {
    /// Whether the error comes from malformed or inconsistent input data, as
    /// opposed to a numerical failure on otherwise valid data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            DsvError::Empty(_)
                | DsvError::DimensionMismatch { .. }
                | DsvError::NonFinite { .. }
                | DsvError::Precondition(_)
                | DsvError::SingleClass
                | DsvError::InvalidConfig(_)
                | DsvError::Parse { .. }
                | DsvError::Validation { .. }
                | DsvError::Io { .. }
        )
    }
}
