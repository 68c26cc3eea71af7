use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the light field pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("degenerate white image: quantile {0} is not positive")]
    DegenerateWhiteImage(f64),

    #[error("insufficient correspondences: {found} found, {required} required")]
    InsufficientCorrespondences { found: usize, required: usize },

    #[error("centre view ({row}, {col}) is missing or invalid")]
    MissingCentreView { row: usize, col: usize },

    #[error("missing manifest {0}")]
    MissingManifest(PathBuf),

    #[error("view ({row}, {col}) is flagged valid but {path} does not exist")]
    MissingView { row: usize, col: usize, path: PathBuf },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad or missing input data rather than a
    /// failure while processing it.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingManifest(_)
                | Error::MissingView { .. }
                | Error::MissingCentreView { .. }
                | Error::Format { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
