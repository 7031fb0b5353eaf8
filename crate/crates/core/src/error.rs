use thiserror::Error;

/// Shape and geometry failures raised by the tensor, DCT and compaction code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("chunk edge {chunk} does not divide dimension {dim} of size {size}")]
    NonDivisible { dim: usize, size: usize, chunk: usize },
    #[error("invalid shape {0:?}: shapes must be non-empty with every dimension >= 1")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
    #[error("k = {k} out of range [1, {max}]")]
    InvalidK { k: usize, max: usize },
    #[error("components disagree on chunk geometry")]
    GeometryMismatch,
    #[error("components disagree on k: expected {expected}, found {found}")]
    KMismatch { expected: usize, found: usize },
    #[error("frequency index {index} out of range for chunk length {chunk_len}")]
    FrequencyOutOfRange { index: u32, chunk_len: usize },
    #[error("no components to merge")]
    Empty,
}
