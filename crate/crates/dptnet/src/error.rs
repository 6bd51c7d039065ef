//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A precondition stated by the API was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid hyperparameter or configuration file.
    #[error("configuration: {0}")]
    Config(String),

    /// NaN/Inf or other numerical failure during computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or incompatible checkpoint file.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// WAV file parsing or encoding problem.
    #[error("wav: {0}")]
    Wav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
