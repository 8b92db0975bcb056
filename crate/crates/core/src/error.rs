use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("shape mismatch: {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("degenerate intensity range: min = max = {value}")]
    DegenerateRange { value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("optimisation diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("index {index} out of range for axis {axis} of extent {extent}")]
    IndexOutOfRange {
        axis: usize,
        index: usize,
        extent: usize,
    },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed header {}: {reason}", .path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload length mismatch for {}: expected {expected} bytes, found {actual}", .path.display())]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite payload value in {} at flat index {index}", .path.display())]
    NonFinitePayload { path: PathBuf, index: usize },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
