use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: need at least {needed} samples, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("prices must be strictly positive and finite, got ({p1}, {p2})")]
    NonPositivePrice { p1: f64, p2: f64 },

    #[error("{0}")]
    Domain(String),

    #[error("spread gradient vanishes at ({p1}, {p2}); the spread must have no stationary points")]
    StationaryPoint { p1: f64, p2: f64 },

    #[error("log(p1) has zero variance over the window; cannot regress")]
    DegenerateRegressor,

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Row {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("{path}:{line}: date {date:?} does not follow {prev:?}")]
    Ordering {
        path: String,
        line: u64,
        prev: String,
        date: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("account value {value} is no longer positive at period {k}")]
    Ruined { k: usize, value: f64 },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Errors caused by bad inputs or configuration, as opposed to failures
    /// while running (I/O, numerical breakdown).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::TooShort { .. }
                | Error::NonPositivePrice { .. }
                | Error::Domain(_)
                | Error::Format { .. }
                | Error::Row { .. }
                | Error::Ordering { .. }
        )
    }
}
