use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the symbolic pipeline or the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quantizer fit failed: {0}")]
    Fit(String),

    #[error("encode failed: {0}")]
    Encode(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("no usable rows in {0}")]
    EmptyData(PathBuf),

    #[error("cannot split series: {0}")]
    Split(String),

    #[error("normalizer fit failed: {0}")]
    Normalizer(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backend error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend {
        status: Option<u16>,
        message: String,
    },

    #[error("backend request timed out after {0} ms")]
    Timeout(u64),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("improvement undefined for base metric {0}")]
    UndefinedImprovement(f64),

    #[error("evaluation failed: {0}")]
    Eval(String),

    #[error("profiling failed: {0}")]
    Profiling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Backend,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Template(_) | Error::Json(_) => ErrorClass::Config,
            Error::Backend { .. } | Error::Timeout(_) => ErrorClass::Backend,
            Error::Eval(_) => ErrorClass::Backend,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn backend(status: Option<u16>, message: impl Into<String>) -> Self {
        Error::Backend {
            status,
            message: message.into(),
        }
    }
}
