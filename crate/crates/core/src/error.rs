use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid label {0}: classification losses require y in {{-1, +1}}")]
    InvalidLabel(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear system is singular or not positive definite")]
    Singular,

    #[error("scheduler: {0}")]
    Scheduler(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("algorithm `{algorithm}` failed at slot {slot}: {source}")]
    Runtime {
        algorithm: String,
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures raised while an algorithm was running, as opposed to
    /// bad input or configuration.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Runtime { .. })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
