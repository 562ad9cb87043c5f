use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),

    #[error(transparent)]
    Core(#[from] kprior::Error),

    #[error("unknown record field '{0}'")]
    UnknownField(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;
