use thiserror::Error;

/// Errors raised by tree construction, tensor algebra and learning.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("invalid ranks: {0}")]
    InvalidRanks(String),
    #[error("inadmissible ranks: {0}")]
    InadmissibleRanks(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value out of domain: {0}")]
    OutOfDomain(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("tensor too large: {size} entries exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("empty sample set")]
    EmptySample,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no admissible swap: {0}")]
    NoSwap(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad input or configuration rather than arithmetic.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
