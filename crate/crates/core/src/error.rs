use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("operator {op:?} used with arity {first} and arity {second}")]
    ArityConflict { op: String, first: usize, second: usize },

    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),

    #[error("unknown operator {0:?}")]
    UnknownOperator(String),

    #[error("unknown head {0:?}")]
    UnknownHead(String),

    #[error("duplicate network name {0:?}")]
    DuplicateName(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },

    #[error("label mismatch at {path}:{line}: file says {file}, recomputed {computed}")]
    LabelMismatch { path: PathBuf, line: usize, file: String, computed: String },

    #[error("generator exhausted: {0}")]
    Exhausted(String),

    #[error("formula has {n} variables, above the limit of {limit}")]
    TooManyVariables { n: usize, limit: usize },

    #[error("unsupported weight file version {0:?}")]
    Version(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
