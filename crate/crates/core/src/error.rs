use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("document {id}: missing {field}")]
    MissingField { id: String, field: &'static str },

    #[error("duplicate id {0} in score sidecar")]
    DuplicateSidecarId(String),

    #[error("unknown document id {0}")]
    UnknownId(String),

    #[error("text too short for minhash (fewer than {n} words)")]
    TooShort { n: usize },

    #[error("mixed signature configurations: {0}")]
    MixedConfig(String),

    #[error("infeasible goal of {goal} documents; at most {max_achievable} achievable")]
    InfeasibleGoal { goal: u64, max_achievable: u64 },

    #[error("target {target} exceeds corpus size {available}")]
    TargetTooLarge { target: u64, available: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
