//! Training, benchmarking, and dataset tooling around the `qgnn`
//! primitives: a two-layer GCN/GAT trainer with JSON-lines metrics,
//! automatic bit-width derivation, a stochastic-block-model generator, and
//! per-primitive micro-benchmarks.

pub mod bench;
pub mod config;
pub mod data;
pub mod synth;
pub mod train;
