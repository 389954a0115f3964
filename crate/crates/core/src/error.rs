use thiserror::Error;

/// Errors raised by the partition, statistic and harness layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} is not covered by any cell")]
    NotAPartition { index: usize },

    #[error("cell {cell} has positive joint mass but zero product mass")]
    AbsoluteContinuity { cell: usize },

    #[error("exhaustive pruning oracle supports at most {max} leaves, tree has {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("unsupported model for this operation: {0}")]
    UnsupportedModel(String),

    #[error("numerical integration failed on cell {cell}")]
    Integration { cell: usize },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
