use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by simulation, training and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or indices of the inputs do not agree.
    #[error("structural error: {0}")]
    Structural(String),

    /// A non-finite value appeared while evaluating a recorded graph.
    #[error("non-finite value at tape node {node}")]
    Numeric { node: usize },

    /// A non-finite gradient reached the optimizer.
    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },

    /// Training drove a parameter out of its admissible range.
    #[error("divergence: {0}")]
    Divergence(String),

    /// The decoder normalization contains a zero gain.
    #[error("degenerate decoder: normalization gain at cycle {cycle} is zero")]
    DegenerateDecoder { cycle: usize },

    /// Every parameter was screened out of a finite-difference check.
    #[error("finite-difference check inconclusive: all {0} parameters skipped")]
    InconclusiveCheck(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
