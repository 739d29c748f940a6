use thiserror::Error;

/// Errors raised by layers, graphs, and loss functions.
#[derive(Debug, Error)]
pub enum GradError {
    #[error("{op}: shape mismatch, expected {expected:?} but got {got:?}")]
    ShapeMismatch {
        op: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{op}: tensor data length {len} does not match shape {shape:?}")]
    LengthMismatch {
        op: String,
        shape: Vec<usize>,
        len: usize,
    },

    #[error("gated_sum_pool: empty bag (K = 0)")]
    EmptyBag,

    #[error("concat: empty input list")]
    EmptyConcat,

    #[error("dropout rate {0} is outside [0, 1)")]
    InvalidDropoutRate(f64),

    #[error("non-finite value produced by layer `{layer}`")]
    NonFinite { layer: String },

    #[error("binary label must be 0 or 1, got {0}")]
    InvalidLabel(u8),

    #[error("graph wiring: node {node} references undefined input {port}")]
    BadWiring { node: usize, port: String },
}

pub type Result<T> = std::result::Result<T, GradError>;
