use thiserror::Error;

use crate::model::NetworkState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("neuron index {index} out of range for a network of {len} neurons")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("stale split candidate for neuron {0}: the network changed since it was computed")]
    StaleCandidate(usize),

    #[error("descent diverged at iteration {iter} (loss = {loss})")]
    Diverged {
        iter: usize,
        loss: f64,
        /// Last state whose loss was finite.
        last_finite: Box<NetworkState>,
    },

    #[error("splitting index {0} is not negative; the angle sweep needs λ_min < 0")]
    NotSplittable(f64),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
