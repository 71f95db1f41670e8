use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("refusing dense operation: d={d} exceeds oracle cap {cap}")]
    OracleCap { d: usize, cap: usize },

    #[error("numerical breakdown at node {node}: {msg}")]
    Breakdown { node: usize, msg: String },

    #[error("{0}")]
    Numerical(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
