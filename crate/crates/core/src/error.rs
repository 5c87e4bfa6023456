use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty planning window")]
    EmptyWindow,

    #[error("negative capacity estimate {value} for device {device} at window slot {slot}")]
    NegativeCapacity {
        device: usize,
        slot: usize,
        value: f64,
    },

    #[error("average estimator needs channel metadata for device {device} ({resource})")]
    MissingChannelMeta {
        device: usize,
        resource: &'static str,
    },

    #[error("brute-force oracle instance too large: {points} grid points")]
    OracleTooLarge { points: f64 },

    #[error("{path}:{line}: {msg}")]
    TraceParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: trace has {got} lines, need at least {need}")]
    ShortTrace {
        path: PathBuf,
        got: usize,
        need: usize,
    },

    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("slot {t}: {source}")]
    AtSlot {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("slot {t}: policy produced an infeasible decision: {detail}")]
    InfeasibleDecision { t: usize, detail: String },

    #[error("{path}: {source}")]
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

impl Error {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
