use thiserror::Error;

/// Errors raised by model evaluation, simulation and fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("likelihood vanished at time index {t}")]
    ZeroLikelihood { t: usize },

    #[error("series of length {len} is too long for exhaustive enumeration (max {max})")]
    TooLarge { len: usize, max: usize },

    #[error("weighted information matrix is singular")]
    Singular,

    #[error("all {runs} short runs failed: {summary}")]
    AllRunsDegenerate { runs: usize, summary: String },
}

pub type Result<T> = std::result::Result<T, Error>;
