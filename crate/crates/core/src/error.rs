use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty request: {0}")]
    EmptyRequest(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },

    #[error("treatment arm {arm} has no observed events")]
    NoEventsInArm { arm: u8 },

    #[error("no observed events; survival model has no signal")]
    NoEvents,

    #[error("residualized treatment has near-zero variance in fold {fold}")]
    NoOverlap { fold: usize },

    #[error("metric is undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("incomplete rank grid, missing cells: {}", .0.join("; "))]
    MissingCells(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: malformed record {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Short stable code used in failed-cell records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyRequest(_) => "empty_request",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EmptyArm { .. } => "empty_arm",
            Error::NoEventsInArm { .. } => "no_events_in_arm",
            Error::NoEvents => "no_events",
            Error::NoOverlap { .. } => "no_overlap",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::MissingCells(_) => "missing_cells",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure_same_len(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { what, left, right });
    }
    Ok(())
}
