//! Thread-local instrumentation: quantization call/reuse counts, scalar
//! operation counts, random-access byte traffic, and per-primitive timers.
//!
//! Counters are thread-local so concurrent test threads cannot disturb each
//! other. All primitives run on the calling thread, so a snapshot taken
//! around a call observes exactly that call's activity.

use std::cell::RefCell;
use std::time::Duration;

/// Primitive families for the timing buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prim {
    GemmF32,
    QGemm,
    Spmm,
    Sddmm,
    Softmax,
    Quantize,
}

const NUM_PRIMS: usize = 6;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Snapshot {
    /// Tensor-level quantization invocations.
    pub quantize_calls: u64,
    /// Consumptions served from a cached quantized tensor instead of a
    /// fresh quantization.
    pub quantize_reuses: u64,
    /// Elements that went through a max-abs scale pass (2 scalar ops each).
    pub scale_pass_elems: u64,
    /// Elements quantized (2 scalar ops each: multiply + cast).
    pub quantized_elems: u64,
    /// Elements dequantized (2 scalar ops each).
    pub dequantized_elems: u64,
    /// Uniform draws consumed by stochastic rounding.
    pub rng_draws: u64,
    /// Bytes of feature operands randomly accessed by sparse primitives.
    pub feature_bytes: u64,
    /// Nanoseconds spent per primitive family.
    pub prim_nanos: [u64; NUM_PRIMS],
}

impl Snapshot {
    /// Difference `self - earlier`, for measuring a region.
    pub fn since(&self, earlier: &Snapshot) -> Snapshot {
        let mut prim_nanos = [0u64; NUM_PRIMS];
        for i in 0..NUM_PRIMS {
            prim_nanos[i] = self.prim_nanos[i] - earlier.prim_nanos[i];
        }
        Snapshot {
            quantize_calls: self.quantize_calls - earlier.quantize_calls,
            quantize_reuses: self.quantize_reuses - earlier.quantize_reuses,
            scale_pass_elems: self.scale_pass_elems - earlier.scale_pass_elems,
            quantized_elems: self.quantized_elems - earlier.quantized_elems,
            dequantized_elems: self.dequantized_elems - earlier.dequantized_elems,
            rng_draws: self.rng_draws - earlier.rng_draws,
            feature_bytes: self.feature_bytes - earlier.feature_bytes,
            prim_nanos,
        }
    }

    /// Scalar operations spent on quantization (scale pass + quantize pass).
    pub fn quant_ops(&self) -> u64 {
        2 * self.scale_pass_elems + 2 * self.quantized_elems
    }

    /// Scalar operations spent on dequantization.
    pub fn dequant_ops(&self) -> u64 {
        2 * self.dequantized_elems
    }

    pub fn prim_time(&self, prim: Prim) -> Duration {
        Duration::from_nanos(self.prim_nanos[prim as usize])
    }
}

thread_local! {
    static COUNTERS: RefCell<Snapshot> = RefCell::new(Snapshot::default());
}

pub fn reset() {
    COUNTERS.with(|c| *c.borrow_mut() = Snapshot::default());
}

pub fn snapshot() -> Snapshot {
    COUNTERS.with(|c| c.borrow().clone())
}

pub(crate) fn record_quantize_call(elems: u64, with_scale_pass: bool, stochastic: bool) {
    COUNTERS.with(|c| {
        let mut c = c.borrow_mut();
        c.quantize_calls += 1;
        c.quantized_elems += elems;
        if with_scale_pass {
            c.scale_pass_elems += elems;
        }
        if stochastic {
            c.rng_draws += elems;
        }
    });
}

pub(crate) fn record_reuse() {
    COUNTERS.with(|c| c.borrow_mut().quantize_reuses += 1);
}

pub(crate) fn record_dequantized(elems: u64) {
    COUNTERS.with(|c| c.borrow_mut().dequantized_elems += elems);
}

pub(crate) fn record_feature_bytes(bytes: u64) {
    COUNTERS.with(|c| c.borrow_mut().feature_bytes += bytes);
}

pub(crate) fn record_time(prim: Prim, dur: Duration) {
    COUNTERS.with(|c| c.borrow_mut().prim_nanos[prim as usize] += dur.as_nanos() as u64);
}

/// Times a region into the given primitive bucket.
pub(crate) fn timed<T>(prim: Prim, f: impl FnOnce() -> T) -> T {
    let start = std::time::Instant::now();
    let out = f();
    record_time(prim, start.elapsed());
    out
}
