use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported constellation order {0}: need a perfect square >= 4")]
    UnsupportedConstellation(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("numeric divergence at iteration {iteration}")]
    NumericDivergence { iteration: usize },

    #[error("configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("I/O error on {}: {source}", path.display())]
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
}
