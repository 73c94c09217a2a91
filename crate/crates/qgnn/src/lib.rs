//! Quantization-aware GNN training primitives on CPU.
//!
//! The crate provides the pieces needed to train GCN and GAT models with
//! low-bit integer arithmetic while keeping full-precision accuracy:
//!
//! - [`rng`]: explicit-state xoshiro256++ generation for stochastic rounding
//! - [`quant`]: symmetric dynamic quantization, the relative error metric,
//!   and bit-width selection
//! - [`dense`]: FP32 GEMM and quantized GEMM with on-the-fly input
//!   quantization, int32 accumulation, and fused output-scale computation
//! - [`graph`]: edge lists, CSR / reverse-CSR / incidence views, graph
//!   augmentation, and GCN normalization
//! - [`sparse`]: quantization-aware SPMM, incidence SPMM, SDDMM variants,
//!   and segment softmax
//! - [`layers`]: GCN and GAT layers with hand-derived backward passes,
//!   full-precision weight updates, and a full-precision final layer
//! - [`plan`]: quantized-tensor reuse planning over layer computation graphs
//! - [`counters`]: thread-local instrumentation (quantize calls, byte
//!   traffic, scalar-op counts, per-primitive timers)

pub mod counters;
pub mod dense;
pub mod error;
pub mod graph;
pub mod layers;
pub mod plan;
pub mod quant;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod toy;

pub use error::OpsError;
pub use rng::RngState;
pub use tensor::DenseTensor;
