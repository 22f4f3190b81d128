use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid semi-value: {0}")]
    InvalidSpec(String),

    #[error("invalid size distribution: {0}")]
    InvalidDistribution(String),

    /// A size with positive weight has zero sampling probability.
    #[error("infinite dispersion: q_{size} = 0 but size {size} carries positive weight")]
    InfiniteDispersion { size: usize },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("{path}:{line}: {msg}")]
    Table {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{what} needs n <= {limit}, got n = {n}")]
    TooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("epsilon = {epsilon} is outside the validity range (0, {max}]")]
    OutOfRange { epsilon: f64, max: f64 },

    #[error("cannot parse {what} from {input:?}: {msg}")]
    Parse {
        what: &'static str,
        input: String,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(what: &'static str, input: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        what,
        input: input.to_string(),
        msg: msg.into(),
    }
}
