use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid rank {rank} for dimension {n}")]
    InvalidRank { rank: usize, n: usize },

    #[error("invalid density {0}: must lie in (0, 1]")]
    InvalidDensity(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "gram matrix is numerically singular (cholesky failed); increase the regularization lambda (currently {lambda})"
    )]
    SingularGram { lambda: f64 },

    #[error("cost matrix is not positive definite: eigenvalue {eigenvalue} <= 0")]
    IndefiniteCost { eigenvalue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
