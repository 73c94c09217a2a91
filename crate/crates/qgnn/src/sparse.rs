//! Quantization-aware sparse primitives.
//!
//! Node and edge feature matrices are quantized in a dedicated sequential
//! pass; the sparse sweeps then random-access the smaller quantized form
//! (1 byte per element instead of 4). Attention scalars stay in full
//! precision throughout: softmax both produces and consumes them, and the
//! exponential amplifies quantization error.
//!
//! Aggregation views: every SPMM-style sweep takes a [`GraphCsr`] whose row
//! owns the output node and whose columns name the feature-side endpoint,
//! with original edge ids for the per-edge scalars. Pass the reverse CSR to
//! aggregate over incoming edges, the forward CSR to aggregate over
//! outgoing edges (the reversed-graph sweep used in backward passes).

use crate::counters::{self, Prim};
use crate::error::OpsError;
use crate::graph::{GraphCsr, IncidenceCsr};
use crate::quant::{QuantSpec, QuantizedTensor};
use crate::rng::RngState;
use crate::tensor::DenseTensor;

/// Per-edge features: `heads` heads of `dim` values per edge, indexed by
/// edge id. Attention scalars are the `dim = 1` case.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures {
    num_edges: usize,
    heads: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EdgeFeatures {
    pub fn zeros(num_edges: usize, heads: usize, dim: usize) -> Self {
        EdgeFeatures {
            num_edges,
            heads,
            dim,
            data: vec![0.0; num_edges * heads * dim],
        }
    }

    pub fn constant(num_edges: usize, heads: usize, value: f32) -> Self {
        EdgeFeatures {
            num_edges,
            heads,
            dim: 1,
            data: vec![value; num_edges * heads],
        }
    }

    pub fn from_vec(
        num_edges: usize,
        heads: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, OpsError> {
        if data.len() != num_edges * heads * dim {
            return Err(OpsError::BadShape {
                what: "edge feature length",
                expected: num_edges * heads * dim,
                got: data.len(),
            });
        }
        Ok(EdgeFeatures {
            num_edges,
            heads,
            dim,
            data,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, edge: usize, head: usize, d: usize) -> f32 {
        self.data[(edge * self.heads + head) * self.dim + d]
    }

    #[inline]
    pub fn set(&mut self, edge: usize, head: usize, d: usize, v: f32) {
        self.data[(edge * self.heads + head) * self.dim + d] = v;
    }

    /// Scalar accessor for `dim = 1` features.
    #[inline]
    pub fn scalar(&self, edge: usize, head: usize) -> f32 {
        debug_assert_eq!(self.dim, 1);
        self.data[edge * self.heads + head]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// View of the underlying storage as an `E x (heads * dim)` matrix.
    pub fn to_dense(&self) -> DenseTensor {
        DenseTensor::from_vec(self.num_edges, self.heads * self.dim, self.data.clone())
            .expect("consistent layout")
    }
}

/// Edge features in quantized form, preserving the head layout.
#[derive(Debug, Clone)]
pub struct QuantizedEdgeFeatures {
    pub heads: usize,
    pub dim: usize,
    pub q: QuantizedTensor,
}

/// Dedicated-pass quantization of node features: one sequential read, one
/// sequential write; sparse sweeps then random-access only the result.
pub fn quantize_node_features(
    x: &DenseTensor,
    spec: QuantSpec,
    rng: &mut RngState,
) -> Result<QuantizedTensor, OpsError> {
    crate::quant::quantize_tensor(x, spec.bits, spec.rounding, rng)
}

/// Dedicated-pass quantization of edge features.
pub fn quantize_edge_features(
    x: &EdgeFeatures,
    spec: QuantSpec,
    rng: &mut RngState,
) -> Result<QuantizedEdgeFeatures, OpsError> {
    let q = crate::quant::quantize_tensor(&x.to_dense(), spec.bits, spec.rounding, rng)?;
    Ok(QuantizedEdgeFeatures {
        heads: x.heads,
        dim: x.dim,
        q,
    })
}

/// A node-feature operand: full precision passthrough or quantized.
#[derive(Debug, Clone, Copy)]
pub enum NodeOperand<'a> {
    Dense(&'a DenseTensor),
    Quantized(&'a QuantizedTensor),
}

impl<'a> NodeOperand<'a> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            NodeOperand::Dense(t) => t.shape(),
            NodeOperand::Quantized(q) => q.shape(),
        }
    }

    /// Reads `row[lo..hi]` into `buf`, dequantizing on the fly, and books
    /// the random-access byte traffic at the operand's element width.
    #[inline]
    fn read_range(&self, row: usize, lo: usize, hi: usize, buf: &mut [f32]) {
        match self {
            NodeOperand::Dense(t) => {
                buf.copy_from_slice(&t.row(row)[lo..hi]);
                counters::record_feature_bytes(4 * (hi - lo) as u64);
            }
            NodeOperand::Quantized(q) => {
                let s = q.scale();
                for (b, &v) in buf.iter_mut().zip(&q.row(row)[lo..hi]) {
                    *b = s * v as f32;
                }
                counters::record_feature_bytes((hi - lo) as u64);
            }
        }
    }
}

/// An edge-feature operand: full precision passthrough or quantized.
#[derive(Debug, Clone, Copy)]
pub enum EdgeOperand<'a> {
    Dense(&'a EdgeFeatures),
    Quantized(&'a QuantizedEdgeFeatures),
}

impl<'a> EdgeOperand<'a> {
    pub fn heads(&self) -> usize {
        match self {
            EdgeOperand::Dense(t) => t.heads,
            EdgeOperand::Quantized(q) => q.heads,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EdgeOperand::Dense(t) => t.dim,
            EdgeOperand::Quantized(q) => q.dim,
        }
    }

    pub fn num_edges(&self) -> usize {
        match self {
            EdgeOperand::Dense(t) => t.num_edges,
            EdgeOperand::Quantized(q) => q.q.rows(),
        }
    }

}

/// How a three-operand SPMM is decomposed into primitive sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpmmStrategy {
    /// One two-operand SPMM sweep per head.
    MultiSpmm,
    /// One SpMV sweep per head; only valid when each head is a scalar.
    MultiSpmv,
    /// A single fused three-operand sweep covering all heads at once.
    FusedFallback,
}

/// Decomposition choice plus the number of independent sweeps it executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelPlan {
    pub strategy: SpmmStrategy,
    pub kernel_count: usize,
}

/// Default sweep budget: decompositions needing more sweeps than this fall
/// back to the fused kernel, because per-sweep launch overhead outgrows the
/// benefit around six sweeps.
pub const DEFAULT_KERNEL_BUDGET: usize = 6;

/// Picks the decomposition for an edge-scaled SPMM with `heads` heads of
/// `per_head_dim` features: per-head SPMM sweeps (or SpMV sweeps when the
/// head dimension is 1) while the sweep count fits the budget, otherwise a
/// single fused sweep.
pub fn plan_kernels(heads: usize, per_head_dim: usize, k_max: usize) -> KernelPlan {
    debug_assert!(heads >= 1 && per_head_dim >= 1);
    let (strategy, count) = if per_head_dim == 1 {
        (SpmmStrategy::MultiSpmv, heads * per_head_dim)
    } else {
        (SpmmStrategy::MultiSpmm, heads)
    };
    if count <= k_max {
        KernelPlan {
            strategy,
            kernel_count: count,
        }
    } else {
        KernelPlan {
            strategy: SpmmStrategy::FusedFallback,
            kernel_count: 1,
        }
    }
}

/// Edge-scaled SPMM: `out[v] = sum over row slots (u, e) of
/// alpha[e][h] * feat[u][h*dh + d]`, head by head.
///
/// `alpha` stays full precision; `feat` may be quantized. Summation runs in
/// the aggregation view's canonical slot order, so results are
/// bit-reproducible and identical across strategies.
pub fn spmm_edge_scaled(
    agg: &GraphCsr,
    alpha: &EdgeFeatures,
    feat: NodeOperand,
    plan: KernelPlan,
) -> Result<DenseTensor, OpsError> {
    let heads = alpha.heads;
    let (_, feat_cols) = feat.shape();
    if alpha.dim != 1 || heads == 0 || feat_cols % heads != 0 {
        return Err(OpsError::ShapeMismatch {
            op: "spmm_edge_scaled",
            left: (alpha.heads, alpha.dim),
            right: feat.shape(),
        });
    }
    if alpha.num_edges != agg.num_edges() {
        return Err(OpsError::BadShape {
            what: "spmm alpha edge count",
            expected: agg.num_edges(),
            got: alpha.num_edges,
        });
    }
    let dh = feat_cols / heads;
    if plan.strategy == SpmmStrategy::MultiSpmv && dh != 1 {
        return Err(OpsError::BadShape {
            what: "spmv per-head dim",
            expected: 1,
            got: dh,
        });
    }
    counters::timed(Prim::Spmm, || {
        let rows = agg.num_rows();
        let mut out = DenseTensor::zeros(rows, heads * dh);
        let mut buf = vec![0.0f32; dh];
        match plan.strategy {
            SpmmStrategy::MultiSpmm => {
                for h in 0..heads {
                    let (lo, hi) = (h * dh, (h + 1) * dh);
                    for v in 0..rows {
                        for (u, e) in agg.row(v) {
                            let a = alpha.scalar(e, h);
                            feat.read_range(u, lo, hi, &mut buf);
                            let orow = &mut out.row_mut(v)[lo..hi];
                            for (o, &x) in orow.iter_mut().zip(buf.iter()) {
                                *o += a * x;
                            }
                        }
                    }
                }
            }
            SpmmStrategy::MultiSpmv => {
                for h in 0..heads {
                    for v in 0..rows {
                        let mut acc = 0.0f32;
                        for (u, e) in agg.row(v) {
                            feat.read_range(u, h, h + 1, &mut buf[..1]);
                            acc += alpha.scalar(e, h) * buf[0];
                        }
                        out.set(v, h, acc);
                    }
                }
            }
            SpmmStrategy::FusedFallback => {
                let mut full = vec![0.0f32; heads * dh];
                for v in 0..rows {
                    for (u, e) in agg.row(v) {
                        feat.read_range(u, 0, heads * dh, &mut full);
                        let orow = out.row_mut(v);
                        for h in 0..heads {
                            let a = alpha.scalar(e, h);
                            for d in 0..dh {
                                orow[h * dh + d] += a * full[h * dh + d];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    })
}

/// Incidence-matrix SPMM: `out[v] = sum over incident edges e of
/// dequant(de[e])`. Two operands; no all-ones feature matrix exists.
/// Quantized inputs accumulate in int32 with a single dequantizing multiply
/// per output element.
pub fn incidence_spmm(inc: &IncidenceCsr, de: EdgeOperand) -> Result<DenseTensor, OpsError> {
    let width = de.heads() * de.dim();
    counters::timed(Prim::Spmm, || {
        let rows = inc.num_rows();
        let mut out = DenseTensor::zeros(rows, width);
        match de {
            EdgeOperand::Quantized(qe) => {
                let s = qe.q.scale();
                let mut acc = vec![0i32; width];
                for v in 0..rows {
                    acc.fill(0);
                    let edges = inc.row(v);
                    for &e in edges {
                        for (a, &c) in acc.iter_mut().zip(qe.q.row(e)) {
                            *a += c as i32;
                        }
                    }
                    counters::record_feature_bytes((edges.len() * width) as u64);
                    for (o, &a) in out.row_mut(v).iter_mut().zip(acc.iter()) {
                        *o = s * a as f32;
                    }
                }
                counters::record_dequantized((rows * width) as u64);
            }
            EdgeOperand::Dense(fe) => {
                for v in 0..rows {
                    let edges = inc.row(v);
                    for &e in edges {
                        let orow = out.row_mut(v);
                        for (d, o) in orow.iter_mut().enumerate() {
                            *o += fe.data[e * width + d];
                        }
                    }
                    counters::record_feature_bytes((edges.len() * width * 4) as u64);
                }
            }
        }
        Ok(out)
    })
}

fn sddmm_shapes(
    a: &NodeOperand,
    b: &NodeOperand,
    op: &'static str,
    heads: usize,
) -> Result<usize, OpsError> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    if ar != br || ac != bc || heads == 0 || ac % heads != 0 {
        return Err(OpsError::ShapeMismatch {
            op,
            left: (ar, ac),
            right: (br, bc),
        });
    }
    Ok(ac / heads)
}

/// SDDMM with on-the-fly dequantization, addition variant: per edge
/// `(u -> v)` and head `h`, `out = s_S * Sq[u][h] + s_D * Dq[v][h]`.
/// The operands carry independent scales, so quantized codes cannot be
/// added directly; each side is dequantized as it is loaded.
pub fn sddmm_add(
    edges: &[(usize, usize)],
    src_scalars: NodeOperand,
    dst_scalars: NodeOperand,
) -> Result<EdgeFeatures, OpsError> {
    let heads = src_scalars.shape().1;
    sddmm_shapes(&src_scalars, &dst_scalars, "sddmm_add", heads)?;
    counters::timed(Prim::Sddmm, || {
        let mut out = EdgeFeatures::zeros(edges.len(), heads, 1);
        let mut sbuf = vec![0.0f32; heads];
        let mut dbuf = vec![0.0f32; heads];
        for (e, &(u, v)) in edges.iter().enumerate() {
            src_scalars.read_range(u, 0, heads, &mut sbuf);
            dst_scalars.read_range(v, 0, heads, &mut dbuf);
            for h in 0..heads {
                out.set(e, h, 0, sbuf[h] + dbuf[h]);
            }
        }
        Ok(out)
    })
}

/// SDDMM dot-product variant: per edge `(u -> v)` and head `h`, the dot of
/// `dst_feat[v]` and `src_feat[u]` over the head's dimensions. Quantized
/// operands multiply directly in integers (int32 accumulation) with a
/// single `s_a * s_b` multiply at the end.
pub fn sddmm_dot(
    edges: &[(usize, usize)],
    dst_feat: NodeOperand,
    src_feat: NodeOperand,
    heads: usize,
) -> Result<EdgeFeatures, OpsError> {
    let dh = sddmm_shapes(&dst_feat, &src_feat, "sddmm_dot", heads)?;
    counters::timed(Prim::Sddmm, || {
        let mut out = EdgeFeatures::zeros(edges.len(), heads, 1);
        match (dst_feat, src_feat) {
            (NodeOperand::Quantized(qa), NodeOperand::Quantized(qb)) => {
                let s = qa.scale() * qb.scale();
                for (e, &(u, v)) in edges.iter().enumerate() {
                    let arow = qa.row(v);
                    let brow = qb.row(u);
                    counters::record_feature_bytes(2 * (heads * dh) as u64);
                    for h in 0..heads {
                        let mut acc = 0i32;
                        for d in h * dh..(h + 1) * dh {
                            acc += arow[d] as i32 * brow[d] as i32;
                        }
                        out.set(e, h, 0, s * acc as f32);
                    }
                }
                counters::record_dequantized((edges.len() * heads) as u64);
            }
            (a, b) => {
                let mut abuf = vec![0.0f32; heads * dh];
                let mut bbuf = vec![0.0f32; heads * dh];
                for (e, &(u, v)) in edges.iter().enumerate() {
                    a.read_range(v, 0, heads * dh, &mut abuf);
                    b.read_range(u, 0, heads * dh, &mut bbuf);
                    for h in 0..heads {
                        let mut acc = 0.0f32;
                        for d in h * dh..(h + 1) * dh {
                            acc += abuf[d] * bbuf[d];
                        }
                        out.set(e, h, 0, acc);
                    }
                }
            }
        }
        Ok(out)
    })
}

/// Per-destination softmax over incoming edge scores, head-wise, with
/// max-subtraction stabilization (shift-invariant, so large logits cannot
/// overflow the exponential). Returns the attention scalars and the
/// per-node stabilized denominators for the backward context.
///
/// `agg` must be the in-edge view (reverse CSR). Every destination must
/// have at least one incoming edge; self-loop augmentation guarantees this.
pub fn segment_softmax(
    agg: &GraphCsr,
    scores: &EdgeFeatures,
) -> Result<(EdgeFeatures, DenseTensor), OpsError> {
    if scores.dim != 1 {
        return Err(OpsError::BadShape {
            what: "softmax score dim",
            expected: 1,
            got: scores.dim,
        });
    }
    for v in 0..agg.num_rows() {
        if agg.row_len(v) == 0 {
            return Err(OpsError::ZeroInDegree { node: v });
        }
    }
    counters::timed(Prim::Softmax, || {
        let heads = scores.heads;
        let rows = agg.num_rows();
        let mut alpha = EdgeFeatures::zeros(scores.num_edges, heads, 1);
        let mut denoms = DenseTensor::zeros(rows, heads);
        for v in 0..rows {
            for h in 0..heads {
                let mut m = f32::NEG_INFINITY;
                for (_, e) in agg.row(v) {
                    m = m.max(scores.scalar(e, h));
                }
                let mut denom = 0.0f32;
                for (_, e) in agg.row(v) {
                    denom += (scores.scalar(e, h) - m).exp();
                }
                for (_, e) in agg.row(v) {
                    alpha.set(e, h, 0, (scores.scalar(e, h) - m).exp() / denom);
                }
                denoms.set(v, h, denom);
            }
        }
        Ok((alpha, denoms))
    })
}

/// Backward of the segment softmax: `p[v][h] = sum over in-edges of
/// d_alpha * alpha` (an incidence-style aggregation), then per edge
/// `d_score = alpha * (d_alpha - p[dst])` (an SDDMM-style broadcast).
pub fn softmax_backward(
    agg: &GraphCsr,
    alpha: &EdgeFeatures,
    d_alpha: &EdgeFeatures,
) -> Result<EdgeFeatures, OpsError> {
    if alpha.heads != d_alpha.heads || alpha.num_edges != d_alpha.num_edges {
        return Err(OpsError::ShapeMismatch {
            op: "softmax_backward",
            left: (alpha.num_edges, alpha.heads),
            right: (d_alpha.num_edges, d_alpha.heads),
        });
    }
    counters::timed(Prim::Softmax, || {
        let heads = alpha.heads;
        let rows = agg.num_rows();
        let mut p = DenseTensor::zeros(rows, heads);
        for v in 0..rows {
            for (_, e) in agg.row(v) {
                for h in 0..heads {
                    let cur = p.get(v, h);
                    p.set(v, h, cur + d_alpha.scalar(e, h) * alpha.scalar(e, h));
                }
            }
        }
        let mut d_scores = EdgeFeatures::zeros(alpha.num_edges, heads, 1);
        for v in 0..rows {
            for (_, e) in agg.row(v) {
                for h in 0..heads {
                    let a = alpha.scalar(e, h);
                    d_scores.set(e, h, 0, a * (d_alpha.scalar(e, h) - p.get(v, h)));
                }
            }
        }
        Ok(d_scores)
    })
}
