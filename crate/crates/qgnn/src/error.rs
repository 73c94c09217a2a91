//! Error types shared by the tensor and primitive modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{what}: expected {expected}, got {got}")]
    BadShape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bit width {0} outside supported range [2, 8]")]
    BitsOutOfRange(u8),
    #[error("operand bit widths differ: {a} vs {b}")]
    BitsMismatch { a: u8, b: u8 },
    #[error("empty bit-width candidate list")]
    EmptyCandidates,
    #[error("inner dimension {k} exceeds the int32 accumulator guard ({max})")]
    InnerDimTooLarge { k: usize, max: usize },
    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },
    #[error("node {node} has no incoming edges; augment the graph with self-loops")]
    ZeroInDegree { node: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("quantized value {value} does not fit {bits} bits")]
    ValueOutOfRange { value: i32, bits: u8 },
    #[error("computation graph has a cycle involving {0}")]
    CyclicGraph(String),
}
