use std::path::PathBuf;

/// Errors raised across the model, estimator and harness layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "infeasible correlations (sigma12={sigma12}, sigma13={sigma13}, sigma23={sigma23}): \
         residual variance v={v} must be positive"
    )]
    Infeasible {
        sigma12: f64,
        sigma13: f64,
        sigma23: f64,
        v: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular or rank-deficient matrix: {0}")]
    Singular(String),

    #[error("fitting regime violated: {0}")]
    Regime(String),

    #[error("zero-variance input: {0}")]
    ZeroVariance(String),

    #[error("correlation of magnitude one gives infinite mutual information ({0})")]
    InfiniteInformation(String),

    #[error("inconsistent model: {0}")]
    Inconsistent(String),

    #[error("not enough samples: {0}")]
    InsufficientSamples(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
