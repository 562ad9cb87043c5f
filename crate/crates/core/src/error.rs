use thiserror::Error;

/// Errors raised by the K-prior library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    Domain(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid label {label} at row {row} for {family}")]
    InvalidLabel {
        row: usize,
        label: f64,
        family: &'static str,
    },

    #[error("memory row {0} is not a row of the supplied data")]
    MemoryNotSubset(usize),

    #[error("requested rank {requested} exceeds basis rank {rank}")]
    RankExceeded { requested: usize, rank: usize },

    #[error("memory size {requested} exceeds data size {available}")]
    MemoryTooLarge { requested: usize, available: usize },

    #[error("singular weighting: entry {0} of the prediction-difference diagonal is zero")]
    SingularWeighting(usize),

    #[error("oracle returned a non-finite {what} at iteration {iter}")]
    NonFiniteOracle { what: &'static str, iter: usize },

    #[error("unsupported task for {method}: {reason}")]
    UnsupportedTask {
        method: &'static str,
        reason: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
