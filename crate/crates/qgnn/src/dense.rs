//! Dense matrix products: an exact FP32 GEMM and a quantized GEMM that
//! quantizes its inputs tile-by-tile during the product pass, accumulates in
//! 32-bit integers, and fuses dequantization with the output scaling-factor
//! computation.
//!
//! Also holds the per-head consolidation kernels used by attention layers,
//! which are narrow GEMM variants sharing the same integer core rules.

use crate::counters::{self, Prim};
use crate::error::OpsError;
use crate::quant::{QuantParams, QuantSpec, QuantizedTensor, Rounding};
use crate::rng::RngState;
use crate::tensor::DenseTensor;

/// Inner-dimension guard: 127^2 * 32768 < 2^31, so an int32 accumulator
/// cannot wrap for any supported bit width.
pub const MAX_INNER_DIM: usize = 32768;

const TILE: usize = 64;

/// Exact 32-bit float product with a fixed k-inner ascending summation
/// order, bit-reproducible across runs.
pub fn gemm_f32(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor, OpsError> {
    if a.cols() != b.rows() {
        return Err(OpsError::ShapeMismatch {
            op: "gemm_f32",
            left: a.shape(),
            right: b.shape(),
        });
    }
    counters::timed(Prim::GemmF32, || {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut c = DenseTensor::zeros(m, n);
        for i in 0..m {
            let arow = a.row(i);
            let crow = c.row_mut(i);
            for (kk, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = b.row(kk);
                for j in 0..n {
                    crow[j] += av * brow[j];
                }
            }
        }
        let _ = k;
        Ok(c)
    })
}

/// Output of a quantized GEMM.
#[derive(Debug, Clone)]
pub struct QGemmResult {
    /// Dequantized product `s_a * s_b * (A_q . B_q)`.
    pub c: DenseTensor,
    /// Scale of `c` at the active bit width, derived during the
    /// dequantization sweep so no dedicated max pass is needed when `c` is
    /// quantized by a downstream consumer.
    pub s_c: f32,
    /// Freshly quantized operands, returned for caching. `None` for
    /// operands that arrived pre-quantized.
    pub a_q: Option<QuantizedTensor>,
    pub b_q: Option<QuantizedTensor>,
}

/// A GEMM input: either a dense tensor to be quantized on the fly, or an
/// already-quantized tensor from a cache.
#[derive(Debug, Clone, Copy)]
pub enum GemmOperand<'a> {
    Dense(&'a DenseTensor),
    Quantized(&'a QuantizedTensor),
}

impl<'a> GemmOperand<'a> {
    fn shape(&self) -> (usize, usize) {
        match self {
            GemmOperand::Dense(t) => t.shape(),
            GemmOperand::Quantized(q) => q.shape(),
        }
    }
}

struct Codes {
    values: Vec<i8>,
    scale: f32,
    fresh: bool,
}

/// Quantizes one row-band [r0, r1) of `src`, row-major, into `dst`.
fn quantize_band(
    src: &DenseTensor,
    dst: &mut [i8],
    params: QuantParams,
    rounding: Rounding,
    r0: usize,
    r1: usize,
    rng: &mut RngState,
) {
    let qmax = params.qmax();
    let inv_s = 1.0 / params.scale;
    let cols = src.cols();
    for r in r0..r1 {
        let row = src.row(r);
        let out = &mut dst[r * cols..(r + 1) * cols];
        for (o, &v) in out.iter_mut().zip(row) {
            let scaled = v * inv_s;
            let q = match rounding {
                Rounding::Stochastic => crate::quant::stochastic_round(scaled, rng),
                Rounding::Nearest => crate::quant::nearest_round(scaled),
            };
            *o = q.clamp(-qmax, qmax) as i8;
        }
    }
}

/// Quantized GEMM with on-the-fly input quantization.
///
/// Dense operands are quantized in tiles as the product sweep first touches
/// them (row bands of A, column bands of B), so each input element is
/// quantized exactly once and the quantized form is emitted for reuse.
/// Products accumulate in int32; the output is dequantized in a single
/// sweep that also derives `s_c` as a running max.
pub fn qgemm_with_cached(
    a: GemmOperand,
    b: GemmOperand,
    spec: QuantSpec,
    rng: &mut RngState,
) -> Result<QGemmResult, OpsError> {
    let (m, ka) = a.shape();
    let (kb, n) = b.shape();
    if ka != kb {
        return Err(OpsError::ShapeMismatch {
            op: "qgemm",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let k = ka;
    if k > MAX_INNER_DIM {
        return Err(OpsError::InnerDimTooLarge {
            k,
            max: MAX_INNER_DIM,
        });
    }
    for op in [&a, &b] {
        if let GemmOperand::Quantized(q) = op {
            if q.bits() != spec.bits {
                return Err(OpsError::BitsMismatch {
                    a: q.bits(),
                    b: spec.bits,
                });
            }
        }
    }
    let params = |t: &DenseTensor| -> Result<QuantParams, OpsError> {
        Ok(QuantParams {
            bits: spec.bits,
            scale: crate::quant::compute_scale(t, spec.bits)?,
        })
    };

    counters::timed(Prim::QGemm, || {
        let (a_params, b_params) = (
            match a {
                GemmOperand::Dense(t) => params(t)?,
                GemmOperand::Quantized(q) => q.params(),
            },
            match b {
                GemmOperand::Dense(t) => params(t)?,
                GemmOperand::Quantized(q) => q.params(),
            },
        );

        let mut a_codes = match a {
            GemmOperand::Dense(_) => Codes {
                values: vec![0i8; m * k],
                scale: a_params.scale,
                fresh: true,
            },
            GemmOperand::Quantized(q) => Codes {
                values: q.values().to_vec(),
                scale: q.scale(),
                fresh: false,
            },
        };
        let mut b_codes = match b {
            GemmOperand::Dense(_) => Codes {
                values: vec![0i8; k * n],
                scale: b_params.scale,
                fresh: true,
            },
            GemmOperand::Quantized(q) => Codes {
                values: q.values().to_vec(),
                scale: q.scale(),
                fresh: false,
            },
        };

        let mut c_int = vec![0i32; m * n];
        for ib in (0..m).step_by(TILE) {
            let ie = (ib + TILE).min(m);
            // A row band (ib..ie) is first touched here; quantize it now.
            if let GemmOperand::Dense(t) = a {
                quantize_band(t, &mut a_codes.values, a_params, spec.rounding, ib, ie, rng);
            }
            for jb in (0..n).step_by(TILE) {
                let je = (jb + TILE).min(n);
                // B column band (jb..je) is first touched on the first row
                // band; quantize its k-rows restricted to these columns.
                if ib == 0 {
                    if let GemmOperand::Dense(t) = b {
                        let qmax = b_params.qmax();
                        let inv_s = 1.0 / b_params.scale;
                        for kk in 0..k {
                            let row = t.row(kk);
                            for j in jb..je {
                                let scaled = row[j] * inv_s;
                                let q = match spec.rounding {
                                    Rounding::Stochastic => {
                                        crate::quant::stochastic_round(scaled, rng)
                                    }
                                    Rounding::Nearest => crate::quant::nearest_round(scaled),
                                };
                                b_codes.values[kk * n + j] = q.clamp(-qmax, qmax) as i8;
                            }
                        }
                    }
                }
                // Integer core: int32 accumulation, k ascending.
                for i in ib..ie {
                    let arow = &a_codes.values[i * k..(i + 1) * k];
                    for j in jb..je {
                        let mut acc = 0i32;
                        for (kk, &av) in arow.iter().enumerate() {
                            acc += av as i32 * b_codes.values[kk * n + j] as i32;
                        }
                        c_int[i * n + j] = acc;
                    }
                }
            }
        }
        if a_codes.fresh {
            counters::record_quantize_call(
                (m * k) as u64,
                true,
                matches!(spec.rounding, Rounding::Stochastic),
            );
        }
        if b_codes.fresh {
            counters::record_quantize_call(
                (k * n) as u64,
                true,
                matches!(spec.rounding, Rounding::Stochastic),
            );
        }

        // Fused dequantization + output scale derivation.
        let s_ab = a_codes.scale * b_codes.scale;
        let mut max_abs = 0.0f32;
        let data: Vec<f32> = c_int
            .iter()
            .map(|&v| {
                let x = s_ab * v as f32;
                max_abs = max_abs.max(x.abs());
                x
            })
            .collect();
        counters::record_dequantized((m * n) as u64);
        let qmax = ((1i32 << (spec.bits - 1)) - 1) as f32;
        let s_c = if max_abs == 0.0 { 1.0 } else { max_abs / qmax };

        let wrap = |codes: Codes, rows: usize, cols: usize| -> Option<QuantizedTensor> {
            if codes.fresh {
                Some(
                    QuantizedTensor::from_parts(
                        rows,
                        cols,
                        codes.values,
                        QuantParams {
                            bits: spec.bits,
                            scale: codes.scale,
                        },
                    )
                    .expect("codes are clamped to range"),
                )
            } else {
                None
            }
        };
        let a_q = wrap(a_codes, m, k);
        let b_q = wrap(b_codes, k, n);
        Ok(QGemmResult {
            c: DenseTensor::from_vec(m, n, data).expect("consistent shape"),
            s_c,
            a_q,
            b_q,
        })
    })
}

/// Quantized GEMM over two dense inputs; both are quantized on the fly and
/// returned for caching.
pub fn qgemm(
    a: &DenseTensor,
    b: &DenseTensor,
    spec: QuantSpec,
    rng: &mut RngState,
) -> Result<QGemmResult, OpsError> {
    qgemm_with_cached(GemmOperand::Dense(a), GemmOperand::Dense(b), spec, rng)
}

fn check_head_shapes(
    hp: (usize, usize),
    attn: (usize, usize),
    op: &'static str,
) -> Result<usize, OpsError> {
    let (heads, dh) = attn;
    if heads == 0 || dh == 0 || hp.1 != heads * dh {
        return Err(OpsError::ShapeMismatch {
            op,
            left: hp,
            right: attn,
        });
    }
    Ok(dh)
}

/// Per-head consolidation of projected features into scalars:
/// `out[v][h] = sum_d hp[v][h*dh + d] * attn[h][d]`.
pub fn consolidate_heads_f32(
    hp: &DenseTensor,
    attn: &DenseTensor,
) -> Result<DenseTensor, OpsError> {
    let dh = check_head_shapes(hp.shape(), attn.shape(), "consolidate_heads")?;
    let heads = attn.rows();
    counters::timed(Prim::GemmF32, || {
        let mut out = DenseTensor::zeros(hp.rows(), heads);
        for v in 0..hp.rows() {
            let row = hp.row(v);
            for h in 0..heads {
                let a = attn.row(h);
                let mut acc = 0.0f32;
                for d in 0..dh {
                    acc += row[h * dh + d] * a[d];
                }
                out.set(v, h, acc);
            }
        }
        Ok(out)
    })
}

/// Quantized consolidation with int32 accumulation and a fused output
/// scale, mirroring `qgemm`. Returns `(out, s_out)`.
pub fn consolidate_heads_q(
    hp: &QuantizedTensor,
    attn: &QuantizedTensor,
) -> Result<(DenseTensor, f32), OpsError> {
    let dh = check_head_shapes(hp.shape(), attn.shape(), "consolidate_heads")?;
    if hp.bits() != attn.bits() {
        return Err(OpsError::BitsMismatch {
            a: hp.bits(),
            b: attn.bits(),
        });
    }
    let heads = attn.rows();
    counters::timed(Prim::QGemm, || {
        let s = hp.scale() * attn.scale();
        let mut out = DenseTensor::zeros(hp.rows(), heads);
        let mut max_abs = 0.0f32;
        for v in 0..hp.rows() {
            let row = hp.row(v);
            for h in 0..heads {
                let a = attn.row(h);
                let mut acc = 0i32;
                for d in 0..dh {
                    acc += row[h * dh + d] as i32 * a[d] as i32;
                }
                let x = s * acc as f32;
                max_abs = max_abs.max(x.abs());
                out.set(v, h, x);
            }
        }
        counters::record_dequantized(out.len() as u64);
        let qmax = ((1i32 << (hp.bits() - 1)) - 1) as f32;
        let s_out = if max_abs == 0.0 { 1.0 } else { max_abs / qmax };
        Ok((out, s_out))
    })
}

/// Backward of consolidation w.r.t. the attention vectors:
/// `out[h][d] = sum_v scalars[v][h] * hp[v][h*dh + d]`.
pub fn head_weighted_sum_f32(
    scalars: &DenseTensor,
    hp: &DenseTensor,
) -> Result<DenseTensor, OpsError> {
    let heads = scalars.cols();
    if heads == 0 || hp.cols() % heads != 0 || scalars.rows() != hp.rows() {
        return Err(OpsError::ShapeMismatch {
            op: "head_weighted_sum",
            left: scalars.shape(),
            right: hp.shape(),
        });
    }
    let dh = hp.cols() / heads;
    counters::timed(Prim::GemmF32, || {
        let mut out = DenseTensor::zeros(heads, dh);
        for v in 0..hp.rows() {
            let row = hp.row(v);
            for h in 0..heads {
                let w = scalars.get(v, h);
                if w == 0.0 {
                    continue;
                }
                for d in 0..dh {
                    let cur = out.get(h, d);
                    out.set(h, d, cur + w * row[h * dh + d]);
                }
            }
        }
        Ok(out)
    })
}

/// Quantized twin of `head_weighted_sum_f32` (int32 accumulation over V).
pub fn head_weighted_sum_q(
    scalars: &QuantizedTensor,
    hp: &QuantizedTensor,
) -> Result<DenseTensor, OpsError> {
    let heads = scalars.cols();
    if heads == 0 || hp.cols() % heads != 0 || scalars.rows() != hp.rows() {
        return Err(OpsError::ShapeMismatch {
            op: "head_weighted_sum",
            left: scalars.shape(),
            right: hp.shape(),
        });
    }
    if scalars.bits() != hp.bits() {
        return Err(OpsError::BitsMismatch {
            a: scalars.bits(),
            b: hp.bits(),
        });
    }
    if hp.rows() > MAX_INNER_DIM {
        return Err(OpsError::InnerDimTooLarge {
            k: hp.rows(),
            max: MAX_INNER_DIM,
        });
    }
    let dh = hp.cols() / heads;
    counters::timed(Prim::QGemm, || {
        let s = scalars.scale() * hp.scale();
        let mut out = DenseTensor::zeros(heads, dh);
        for h in 0..heads {
            for d in 0..dh {
                let mut acc = 0i32;
                for v in 0..hp.rows() {
                    acc += scalars.get(v, h) as i32 * hp.get(v, h * dh + d) as i32;
                }
                out.set(h, d, s * acc as f32);
            }
        }
        counters::record_dequantized(out.len() as u64);
        Ok(out)
    })
}

/// Backward of consolidation w.r.t. the projected features:
/// `out[v][h*dh + d] = scalars[v][h] * attn[h][d]`.
pub fn head_scale_rows_f32(
    scalars: &DenseTensor,
    attn: &DenseTensor,
) -> Result<DenseTensor, OpsError> {
    if scalars.cols() != attn.rows() {
        return Err(OpsError::ShapeMismatch {
            op: "head_scale_rows",
            left: scalars.shape(),
            right: attn.shape(),
        });
    }
    let (heads, dh) = attn.shape();
    counters::timed(Prim::GemmF32, || {
        let mut out = DenseTensor::zeros(scalars.rows(), heads * dh);
        for v in 0..scalars.rows() {
            let orow = out.row_mut(v);
            for h in 0..heads {
                let w = scalars.get(v, h);
                let a = attn.row(h);
                for d in 0..dh {
                    orow[h * dh + d] = w * a[d];
                }
            }
        }
        Ok(out)
    })
}

/// Quantized twin of `head_scale_rows_f32` (a K=1 integer product).
pub fn head_scale_rows_q(
    scalars: &QuantizedTensor,
    attn: &QuantizedTensor,
) -> Result<DenseTensor, OpsError> {
    if scalars.cols() != attn.rows() {
        return Err(OpsError::ShapeMismatch {
            op: "head_scale_rows",
            left: scalars.shape(),
            right: attn.shape(),
        });
    }
    if scalars.bits() != attn.bits() {
        return Err(OpsError::BitsMismatch {
            a: scalars.bits(),
            b: attn.bits(),
        });
    }
    let (heads, dh) = attn.shape();
    counters::timed(Prim::QGemm, || {
        let s = scalars.scale() * attn.scale();
        let mut out = DenseTensor::zeros(scalars.rows(), heads * dh);
        for v in 0..scalars.rows() {
            let orow = out.row_mut(v);
            for h in 0..heads {
                let w = scalars.get(v, h) as i32;
                let a = attn.row(h);
                for d in 0..dh {
                    orow[h * dh + d] = s * (w * a[d] as i32) as f32;
                }
            }
        }
        counters::record_dequantized(out.len() as u64);
        Ok(out)
    })
}
