use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments, bad configuration, violated preconditions.
    Usage,
    /// Unreadable, malformed or degenerate input data.
    Data,
    /// The numerics blew up (non-finite state, failed eigensolve).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("price panel is empty after filtering")]
    EmptyPanel,

    #[error("window width {width} exceeds the {available} available return columns")]
    WindowTooWide { width: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite phase at step {step} (oscillator {index}); reduce dt")]
    NonFinitePhase { step: usize, index: usize },

    #[error("all coherence histories are identical; the embedding is degenerate (review epsilon and the window range)")]
    DegenerateEmbedding,

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("{stage} stage failed{}: {source}", window.map(|w| format!(" at window {w}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        window: Option<usize>,
        #[source]
        source: Box<Error>,
    },

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

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Wraps `self` with the pipeline stage (and window) that produced it.
    pub fn in_stage(self, stage: &'static str, window: Option<usize>) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                window,
                source: Box::new(other),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::WindowTooWide { .. } => {
                ErrorClass::Usage
            }
            Error::NonFinitePhase { .. } | Error::Eigen(_) => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
            Error::Malformed { .. }
            | Error::NonPositivePrice { .. }
            | Error::EmptyPanel
            | Error::Dimension(_)
            | Error::DegenerateEmbedding
            | Error::MissingArtifact(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}
