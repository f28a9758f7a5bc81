use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid n-gram: expected length {expected}, got {got}")]
    InvalidNGram { expected: usize, got: usize },

    #[error("invalid candidate: expected suffix length {expected}, got {got}")]
    InvalidCandidate { expected: usize, got: usize },

    #[error("degenerate distribution: no probability mass left to sample from")]
    DegenerateDistribution,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid partition: {devices} devices for {columns} window columns")]
    InvalidPartition { devices: usize, columns: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("token {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("parse error at field {field} (byte offset {offset}): {message}")]
    Parse {
        field: usize,
        offset: usize,
        message: String,
    },

    #[error("model file: {0}")]
    ModelFile(String),
}
