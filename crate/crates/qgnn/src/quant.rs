//! Symmetric dynamic quantization with stochastic rounding, the relative
//! quantization-error metric, and bit-width selection.
//!
//! Quantization is symmetric (zero point 0) at tensor-level granularity with
//! a dynamic scale `s = max|X| / (2^(B-1) - 1)`. Values are stored one byte
//! per element for every supported bit width; sub-byte packing is a memory
//! optimization this artifact does not need.

use crate::counters::{self, Prim};
use crate::error::OpsError;
use crate::rng::RngState;
use crate::tensor::DenseTensor;

pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 8;

/// Rounding rule applied when mapping scaled floats to integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// Unbiased randomized rounding: `floor(x) + 1` with probability
    /// `x - floor(x)`, else `floor(x)`.
    Stochastic,
    /// Deterministic round-to-nearest. Used for one-shot bit selection and
    /// as an ablation during training.
    Nearest,
}

/// Bit width plus scale of a quantized tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub bits: u8,
    pub scale: f32,
}

impl QuantParams {
    /// Largest representable magnitude: 2^(B-1) - 1. The symmetric range is
    /// [-qmax, qmax]; the two's-complement minimum -2^(B-1) is never used.
    #[inline]
    pub fn qmax(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }
}

fn check_bits(bits: u8) -> Result<(), OpsError> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(OpsError::BitsOutOfRange(bits))
    }
}

/// Integer-valued tensor plus its quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
    params: QuantParams,
}

impl QuantizedTensor {
    /// Builds from raw integer codes, validating the range against `bits`.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        values: Vec<i8>,
        params: QuantParams,
    ) -> Result<Self, OpsError> {
        check_bits(params.bits)?;
        if values.len() != rows * cols {
            return Err(OpsError::BadShape {
                what: "quantized data length",
                expected: rows * cols,
                got: values.len(),
            });
        }
        let qmax = params.qmax();
        for &v in &values {
            if (v as i32).abs() > qmax {
                return Err(OpsError::ValueOutOfRange {
                    value: v as i32,
                    bits: params.bits,
                });
            }
        }
        Ok(QuantizedTensor {
            rows,
            cols,
            values,
            params,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn params(&self) -> QuantParams {
        self.params
    }

    pub fn scale(&self) -> f32 {
        self.params.scale
    }

    pub fn bits(&self) -> u8 {
        self.params.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[i8] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Transposed copy. The integer codes and scale are unchanged, so this
    /// is not a re-quantization.
    pub fn transposed(&self) -> QuantizedTensor {
        let mut values = vec![0i8; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        QuantizedTensor {
            rows: self.cols,
            cols: self.rows,
            values,
            params: self.params,
        }
    }
}

/// Symmetric dynamic scale: `max|X| / qmax`, or 1 when the tensor is all
/// zero (any positive scale is correct there; 1 avoids special cases
/// downstream).
pub fn compute_scale(x: &DenseTensor, bits: u8) -> Result<f32, OpsError> {
    check_bits(bits)?;
    let max = x.max_abs();
    let qmax = ((1i32 << (bits - 1)) - 1) as f32;
    Ok(if max == 0.0 { 1.0 } else { max / qmax })
}

/// Unbiased randomized rounding of a scaled value: `floor(x) + 1` with
/// probability `x - floor(x)`. Consumes exactly one draw.
#[inline]
pub fn stochastic_round(x: f32, rng: &mut RngState) -> i32 {
    let floor = x.floor();
    let frac = (x - floor) as f64;
    let up = rng.next_unit() < frac;
    floor as i32 + up as i32
}

/// Deterministic round-to-nearest (ties away from zero).
#[inline]
pub fn nearest_round(x: f32) -> i32 {
    x.round() as i32
}

fn quantize_with(
    x: &DenseTensor,
    params: QuantParams,
    rounding: Rounding,
    rng: &mut RngState,
    fresh_scale: bool,
) -> QuantizedTensor {
    counters::timed(Prim::Quantize, || {
        let qmax = params.qmax();
        let inv_s = 1.0 / params.scale;
        let values: Vec<i8> = x
            .as_slice()
            .iter()
            .map(|&v| {
                let scaled = v * inv_s;
                let q = match rounding {
                    Rounding::Stochastic => stochastic_round(scaled, rng),
                    Rounding::Nearest => nearest_round(scaled),
                };
                q.clamp(-qmax, qmax) as i8
            })
            .collect();
        counters::record_quantize_call(
            x.len() as u64,
            fresh_scale,
            matches!(rounding, Rounding::Stochastic),
        );
        QuantizedTensor {
            rows: x.rows(),
            cols: x.cols(),
            values,
            params,
        }
    })
}

/// Quantizes a tensor: one max-abs pass for the scale, then one sequential
/// rounding pass. Values overshooting the endpoint by a rounding step are
/// clamped back to ±qmax.
pub fn quantize_tensor(
    x: &DenseTensor,
    bits: u8,
    rounding: Rounding,
    rng: &mut RngState,
) -> Result<QuantizedTensor, OpsError> {
    let scale = compute_scale(x, bits)?;
    Ok(quantize_with(
        x,
        QuantParams { bits, scale },
        rounding,
        rng,
        true,
    ))
}

/// Quantizes with a scale already known from the producing primitive (a
/// fused scaling-factor computation), skipping the max-abs pass.
pub fn quantize_tensor_with_scale(
    x: &DenseTensor,
    params: QuantParams,
    rounding: Rounding,
    rng: &mut RngState,
) -> Result<QuantizedTensor, OpsError> {
    check_bits(params.bits)?;
    Ok(quantize_with(x, params, rounding, rng, false))
}

/// Recovers the approximate original: element-wise `scale * code`.
pub fn dequantize_tensor(q: &QuantizedTensor) -> DenseTensor {
    let s = q.scale();
    let data: Vec<f32> = q.values.iter().map(|&v| s * v as f32).collect();
    counters::record_dequantized(q.values.len() as u64);
    DenseTensor::from_vec(q.rows, q.cols, data).expect("quantized shape is consistent")
}

/// Relative quantization-error metric:
/// `(1/N) * sum_i |(X_i - Xhat_i) / (X_i + Xhat_i + eps)|` with
/// `eps = 0.0005` guarding the all-zero case. Lies in [0, 1] for symmetric
/// quantization because X_i and Xhat_i share their sign.
pub fn quant_error(x: &DenseTensor, q: &QuantizedTensor) -> Result<f32, OpsError> {
    if x.shape() != q.shape() {
        return Err(OpsError::ShapeMismatch {
            op: "quant_error",
            left: x.shape(),
            right: q.shape(),
        });
    }
    const EPS: f32 = 0.0005;
    let s = q.scale();
    let mut sum = 0.0f64;
    for (&orig, &code) in x.as_slice().iter().zip(q.values.iter()) {
        let deq = s * code as f32;
        sum += ((orig - deq) / (orig + deq + EPS)).abs() as f64;
    }
    Ok((sum / x.len().max(1) as f64) as f32)
}

/// Outcome of a bit-width sweep.
#[derive(Debug, Clone)]
pub struct BitSelection {
    /// Chosen width: the smallest candidate whose error is at or below the
    /// threshold, or the largest candidate when none qualifies.
    pub bits: u8,
    /// Error at the chosen width.
    pub error: f32,
    /// False when no candidate met the threshold and the maximum was
    /// returned as a fallback.
    pub satisfied: bool,
    /// Full `(bits, error)` table over the candidates, ascending.
    pub table: Vec<(u8, f32)>,
}

/// Sweeps candidate bit widths over a tensor and picks the smallest whose
/// quantization error is at or below `threshold`. The metric uses nearest
/// rounding so the one-shot decision carries no sampling noise.
pub fn select_bits(
    x: &DenseTensor,
    threshold: f32,
    candidates: &[u8],
) -> Result<BitSelection, OpsError> {
    if candidates.is_empty() {
        return Err(OpsError::EmptyCandidates);
    }
    let mut rng = RngState::from_seed(0); // unused by nearest rounding
    let mut table = Vec::with_capacity(candidates.len());
    for &bits in candidates {
        let q = quantize_tensor(x, bits, Rounding::Nearest, &mut rng)?;
        table.push((bits, quant_error(x, &q)?));
    }
    let chosen = table.iter().find(|(_, err)| *err <= threshold);
    let (bits, error, satisfied) = match chosen {
        Some(&(bits, err)) => (bits, err, true),
        None => {
            let &(bits, err) = table.last().expect("non-empty");
            (bits, err, false)
        }
    };
    Ok(BitSelection {
        bits,
        error,
        satisfied,
        table,
    })
}

/// How quantized primitives run: bit width, rounding rule, and whether
/// already-quantized tensors are cached and reused across consumer sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    pub bits: u8,
    pub rounding: Rounding,
    pub reuse: bool,
}

impl QuantSpec {
    pub fn new(bits: u8) -> Self {
        QuantSpec {
            bits,
            rounding: Rounding::Stochastic,
            reuse: true,
        }
    }
}

/// Default threshold for `select_bits`: quantization errors at or below
/// this level have been observed not to hurt training accuracy.
pub const ERROR_THRESHOLD: f32 = 0.3;

/// Default candidate widths, ascending.
pub fn default_candidates() -> Vec<u8> {
    (MIN_BITS..=MAX_BITS).collect()
}
