use thiserror::Error;

/// Errors produced by tensor construction, contraction and decomposition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("data length {got} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value {value} at flat offset {offset}")]
    NonFinite { offset: usize, value: f64 },
    #[error("zero-sized leg in shape {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("expected {expected} indices, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("invalid leg partition: {0}")]
    InvalidPartition(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected an order-{expected} tensor, got order {got}")]
    WrongOrder { expected: usize, got: usize },
    #[error("einsum parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("invalid contraction path: {0}")]
    InvalidPath(String),
    #[error("network too large: {0}")]
    TooLarge(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
