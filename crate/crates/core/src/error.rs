use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector norm {norm:e} is below the normalization floor")]
    DegenerateNorm { norm: f64 },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unbalanced data: {0}; oversample the dataset to balance classes first")]
    Unbalanced(String),

    #[error("no valid triplet exists (need >= 2 classes and a class with >= 2 samples)")]
    NoTriplets,

    #[error("k-means produced an empty cluster that could not be repaired")]
    EmptyCluster,

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
