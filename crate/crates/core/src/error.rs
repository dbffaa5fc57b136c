use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("total instance weight is not positive ({0})")]
    DegenerateWeight(f64),

    #[error("mixture likelihood underflowed for instance {0}")]
    ZeroDenominator(usize),

    #[error("operation requires a hard-gated model")]
    ModeError,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("cell ({0}, {1}) cannot reach any exit")]
    UnreachableCell(usize, usize),

    #[error("unsupported model format: {0}")]
    FormatVersionMismatch(String),

    #[error("model parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("solver not found: {0}")]
    SolverNotFound(String),

    #[error("could not parse solver output: {0}")]
    SolverParse(String),

    #[error("solver timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
