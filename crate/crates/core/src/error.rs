use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),

    #[error("unknown dataset `{0}` (expected one of D1, D2, D3, D4)")]
    UnknownDataset(String),

    #[error("timestamp overflow after {0} steps")]
    TimestampOverflow(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed csv: {msg}")]
    Csv { path: PathBuf, msg: String },

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("degenerate scaler: standard deviation is zero over the fit range")]
    DegenerateScaler,

    #[error("no window fits: {0}")]
    NoWindows(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownDataset(_) | Error::InvalidSpec(_)
        )
    }
}
