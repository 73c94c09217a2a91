//! GCN and GAT layers with hand-derived backward passes.
//!
//! In quantized mode the GEMM-class and sparse primitives consume quantized
//! operands while attention scalars, softmax, and all gradients entering
//! the optimizer stay in full precision. Weight updates apply FP32
//! gradients to FP32 master weights; quantization of a weight happens only
//! when the next step consumes it (add-then-quantize, which retains update
//! mass that quantize-then-add would round away).
//!
//! Every quantized consumption site fetches its operand through the step's
//! [`QuantCache`], so with reuse enabled each tensor is quantized exactly
//! once per step and the instrumented call count matches the reuse plan's
//! prediction.

use std::collections::HashMap;
use std::rc::Rc;

use crate::counters;
use crate::dense::{
    consolidate_heads_f32, consolidate_heads_q, gemm_f32, head_scale_rows_f32, head_scale_rows_q,
    head_weighted_sum_f32, head_weighted_sum_q, qgemm_with_cached, GemmOperand,
};
use crate::error::OpsError;
use crate::graph::GraphViews;
use crate::quant::{QuantParams, QuantSpec, QuantizedTensor};
use crate::rng::RngState;
use crate::sparse::{
    incidence_spmm, plan_kernels, quantize_edge_features, segment_softmax, sddmm_add, sddmm_dot,
    softmax_backward, spmm_edge_scaled, EdgeFeatures, EdgeOperand, KernelPlan, NodeOperand,
    QuantizedEdgeFeatures,
};
use crate::tensor::DenseTensor;

/// Numeric mode of a layer for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Fp32,
    Quantized(QuantSpec),
}

/// How multi-head outputs combine: concatenation for hidden layers, head
/// mean for the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadCombine {
    Concat,
    Mean,
}

/// Per-step cache of quantized tensors. Every quantized consumption site
/// goes through `node`/`node_scaled`/`edges`; with reuse enabled a hit
/// serves the cached tensor and books a reuse, otherwise each site
/// quantizes afresh.
#[derive(Debug, Default)]
pub struct QuantCache {
    enabled: bool,
    nodes: HashMap<&'static str, Rc<QuantizedTensor>>,
    edges: HashMap<&'static str, Rc<QuantizedEdgeFeatures>>,
}

impl QuantCache {
    fn new(enabled: bool) -> Self {
        QuantCache {
            enabled,
            ..Default::default()
        }
    }

    fn node(
        &mut self,
        key: &'static str,
        x: &DenseTensor,
        spec: QuantSpec,
        rng: &mut RngState,
    ) -> Result<Rc<QuantizedTensor>, OpsError> {
        if self.enabled {
            if let Some(hit) = self.nodes.get(key) {
                counters::record_reuse();
                return Ok(hit.clone());
            }
        }
        let q = Rc::new(crate::quant::quantize_tensor(x, spec.bits, spec.rounding, rng)?);
        if self.enabled {
            self.nodes.insert(key, q.clone());
        }
        Ok(q)
    }

    /// Like `node` but with a scale already derived by the producing
    /// primitive, skipping the max-abs pass.
    fn node_scaled(
        &mut self,
        key: &'static str,
        x: &DenseTensor,
        params: QuantParams,
        spec: QuantSpec,
        rng: &mut RngState,
    ) -> Result<Rc<QuantizedTensor>, OpsError> {
        if self.enabled {
            if let Some(hit) = self.nodes.get(key) {
                counters::record_reuse();
                return Ok(hit.clone());
            }
        }
        let q = Rc::new(crate::quant::quantize_tensor_with_scale(
            x,
            params,
            spec.rounding,
            rng,
        )?);
        if self.enabled {
            self.nodes.insert(key, q.clone());
        }
        Ok(q)
    }

    fn edge(
        &mut self,
        key: &'static str,
        x: &EdgeFeatures,
        spec: QuantSpec,
        rng: &mut RngState,
    ) -> Result<Rc<QuantizedEdgeFeatures>, OpsError> {
        if self.enabled {
            if let Some(hit) = self.edges.get(key) {
                counters::record_reuse();
                return Ok(hit.clone());
            }
        }
        let q = Rc::new(quantize_edge_features(x, spec, rng)?);
        if self.enabled {
            self.edges.insert(key, q.clone());
        }
        Ok(q)
    }
}

/// Element-wise LeakyReLU over edge scores.
pub fn leaky_relu_edges(scores: &EdgeFeatures, slope: f32) -> EdgeFeatures {
    let mut out = scores.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

/// Backward of the LeakyReLU, masked by the pre-activation sign.
pub fn leaky_relu_backward_edges(
    d_act: &EdgeFeatures,
    pre: &EdgeFeatures,
    slope: f32,
) -> EdgeFeatures {
    let mut out = d_act.clone();
    for (g, &x) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if x < 0.0 {
            *g *= slope;
        }
    }
    out
}

/// GAT layer parameters: projection weights plus per-head source and
/// destination attention vectors.
#[derive(Debug, Clone)]
pub struct GatLayerParams {
    /// in_dim x (heads * head_dim)
    pub w: DenseTensor,
    /// heads x head_dim
    pub a_src: DenseTensor,
    /// heads x head_dim
    pub a_dst: DenseTensor,
    pub leaky_slope: f32,
}

impl GatLayerParams {
    pub fn heads(&self) -> usize {
        self.a_src.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.a_src.cols()
    }

    fn validate(&self, in_dim: usize) -> Result<(), OpsError> {
        if self.a_src.shape() != self.a_dst.shape()
            || self.w.cols() != self.heads() * self.head_dim()
            || self.w.rows() != in_dim
        {
            return Err(OpsError::ShapeMismatch {
                op: "gat layer shapes",
                left: self.w.shape(),
                right: self.a_src.shape(),
            });
        }
        Ok(())
    }
}

/// Everything the backward pass reuses from a GAT forward: activations,
/// the attention state, and the step's quantized-tensor cache.
pub struct GatContext {
    pub mode: Precision,
    pub combine: HeadCombine,
    pub plan: KernelPlan,
    pub h_in: DenseTensor,
    pub h_prime: DenseTensor,
    /// Fused scale of `h_prime` from the projection GEMM.
    pub h_prime_params: Option<QuantParams>,
    /// Edge scores before the activation, kept for the backward mask.
    pub scores_pre: EdgeFeatures,
    pub alpha: EdgeFeatures,
    /// Per-destination stabilized softmax denominators.
    pub denoms: DenseTensor,
    pub cache: QuantCache,
    pub out_shape: (usize, usize),
}

/// Gradients produced by a GAT backward pass.
pub struct GatGrads {
    pub d_h_in: DenseTensor,
    pub d_w: DenseTensor,
    pub d_a_src: DenseTensor,
    pub d_a_dst: DenseTensor,
}

/// GAT forward: projection, per-head consolidation, additive SDDMM with
/// LeakyReLU, full-precision segment softmax, and edge-scaled aggregation.
/// Quantized mode quantizes the GEMM/SPMM/SDDMM operands; the attention
/// step never quantizes.
pub fn gat_forward(
    p: &GatLayerParams,
    g: &GraphViews,
    h_in: &DenseTensor,
    mode: Precision,
    combine: HeadCombine,
    k_max: usize,
    rng: &mut RngState,
) -> Result<(DenseTensor, GatContext), OpsError> {
    h_in.check_finite("gat input")?;
    p.validate(h_in.cols())?;
    let (heads, dh) = (p.heads(), p.head_dim());
    let plan = plan_kernels(heads, dh, k_max);
    let edges = &g.edges.edges;

    let mut cache = QuantCache::new(match mode {
        Precision::Fp32 => false,
        Precision::Quantized(spec) => spec.reuse,
    });

    let (h_prime, h_prime_params, scores_pre) = match mode {
        Precision::Fp32 => {
            let h_prime = gemm_f32(h_in, &p.w)?;
            let s = consolidate_heads_f32(&h_prime, &p.a_src)?;
            let d = consolidate_heads_f32(&h_prime, &p.a_dst)?;
            let scores =
                sddmm_add(edges, NodeOperand::Dense(&s), NodeOperand::Dense(&d))?;
            (h_prime, None, scores)
        }
        Precision::Quantized(spec) => {
            let h_in_q = cache.node("h_in", h_in, spec, rng)?;
            let w_q = cache.node("w", &p.w, spec, rng)?;
            let r = qgemm_with_cached(
                GemmOperand::Quantized(&h_in_q),
                GemmOperand::Quantized(&w_q),
                spec,
                rng,
            )?;
            let hp_params = QuantParams {
                bits: spec.bits,
                scale: r.s_c,
            };
            let hp_q = cache.node_scaled("h_prime", &r.c, hp_params, spec, rng)?;
            let a_src_q = cache.node("a_src", &p.a_src, spec, rng)?;
            let (s, s_scale) = consolidate_heads_q(&hp_q, &a_src_q)?;
            let hp_q2 = cache.node_scaled("h_prime", &r.c, hp_params, spec, rng)?;
            let a_dst_q = cache.node("a_dst", &p.a_dst, spec, rng)?;
            let (d, d_scale) = consolidate_heads_q(&hp_q2, &a_dst_q)?;
            let s_q = cache.node_scaled(
                "s",
                &s,
                QuantParams {
                    bits: spec.bits,
                    scale: s_scale,
                },
                spec,
                rng,
            )?;
            let d_q = cache.node_scaled(
                "d",
                &d,
                QuantParams {
                    bits: spec.bits,
                    scale: d_scale,
                },
                spec,
                rng,
            )?;
            let scores = sddmm_add(
                edges,
                NodeOperand::Quantized(&s_q),
                NodeOperand::Quantized(&d_q),
            )?;
            (r.c, Some(hp_params), scores)
        }
    };

    let scores_act = leaky_relu_edges(&scores_pre, p.leaky_slope);
    let (alpha, denoms) = segment_softmax(&g.rev_csr, &scores_act)?;

    let concat = match mode {
        Precision::Fp32 => {
            spmm_edge_scaled(&g.rev_csr, &alpha, NodeOperand::Dense(&h_prime), plan)?
        }
        Precision::Quantized(spec) => {
            let hp_q = cache.node_scaled(
                "h_prime",
                &h_prime,
                h_prime_params.expect("set in quantized branch"),
                spec,
                rng,
            )?;
            spmm_edge_scaled(&g.rev_csr, &alpha, NodeOperand::Quantized(&hp_q), plan)?
        }
    };

    let out = match combine {
        HeadCombine::Concat => concat,
        HeadCombine::Mean => {
            let mut out = DenseTensor::zeros(concat.rows(), dh);
            let inv = 1.0 / heads as f32;
            for v in 0..concat.rows() {
                for d in 0..dh {
                    let mut acc = 0.0f32;
                    for h in 0..heads {
                        acc += concat.get(v, h * dh + d);
                    }
                    out.set(v, d, acc * inv);
                }
            }
            out
        }
    };

    let ctx = GatContext {
        mode,
        combine,
        plan,
        h_in: h_in.clone(),
        h_prime,
        h_prime_params,
        scores_pre,
        alpha,
        denoms,
        cache,
        out_shape: out.shape(),
    };
    Ok((out, ctx))
}

/// GAT backward: aggregation gradients over the reversed graph, the
/// softmax derivative, incidence aggregation of edge-score gradients, and
/// the projection backward. Quantized tensors cached by the forward pass
/// (input, weights, projection, attention vectors) are reused, as is the
/// output gradient shared by the two aggregation products.
pub fn gat_backward(
    p: &GatLayerParams,
    g: &GraphViews,
    ctx: &mut GatContext,
    d_out: &DenseTensor,
    rng: &mut RngState,
) -> Result<GatGrads, OpsError> {
    let (heads, dh) = (p.heads(), p.head_dim());
    let expected = match ctx.combine {
        HeadCombine::Concat => ctx.out_shape,
        HeadCombine::Mean => ctx.out_shape,
    };
    if d_out.shape() != expected {
        return Err(OpsError::ShapeMismatch {
            op: "gat_backward output gradient",
            left: d_out.shape(),
            right: expected,
        });
    }

    // Gradient w.r.t. the concatenated aggregation output.
    let d_concat = match ctx.combine {
        HeadCombine::Concat => d_out.clone(),
        HeadCombine::Mean => {
            let inv = 1.0 / heads as f32;
            let mut out = DenseTensor::zeros(d_out.rows(), heads * dh);
            for v in 0..d_out.rows() {
                for h in 0..heads {
                    for d in 0..dh {
                        out.set(v, h * dh + d, d_out.get(v, d) * inv);
                    }
                }
            }
            out
        }
    };
    let edges = &g.edges.edges;

    match ctx.mode {
        Precision::Fp32 => {
            // aggregation backward: features over the reversed graph, then
            // the attention-scalar dot products
            let d_h_prime_agg = spmm_edge_scaled(
                &g.csr,
                &ctx.alpha,
                NodeOperand::Dense(&d_concat),
                ctx.plan,
            )?;
            let d_alpha = sddmm_dot(
                edges,
                NodeOperand::Dense(&d_concat),
                NodeOperand::Dense(&ctx.h_prime),
                heads,
            )?;
            let d_scores_act = softmax_backward(&g.rev_csr, &ctx.alpha, &d_alpha)?;
            let d_scores =
                leaky_relu_backward_edges(&d_scores_act, &ctx.scores_pre, p.leaky_slope);
            let d_s = incidence_spmm(&g.rev_incidence, EdgeOperand::Dense(&d_scores))?;
            let d_d = incidence_spmm(&g.incidence, EdgeOperand::Dense(&d_scores))?;
            let d_a_src = head_weighted_sum_f32(&d_s, &ctx.h_prime)?;
            let d_a_dst = head_weighted_sum_f32(&d_d, &ctx.h_prime)?;
            let mut d_h_prime = d_h_prime_agg;
            d_h_prime.add_assign(&head_scale_rows_f32(&d_s, &p.a_src)?)?;
            d_h_prime.add_assign(&head_scale_rows_f32(&d_d, &p.a_dst)?)?;
            let d_w = gemm_f32(&ctx.h_in.transposed(), &d_h_prime)?;
            let d_h_in = gemm_f32(&d_h_prime, &p.w.transposed())?;
            Ok(GatGrads {
                d_h_in,
                d_w,
                d_a_src,
                d_a_dst,
            })
        }
        Precision::Quantized(spec) => {
            let cache = &mut ctx.cache;
            let hp_params = ctx.h_prime_params.expect("quantized forward sets scale");

            // aggregate_grad_features
            let d_hout_q = cache.node("d_h_out", &d_concat, spec, rng)?;
            let d_h_prime_agg = spmm_edge_scaled(
                &g.csr,
                &ctx.alpha,
                NodeOperand::Quantized(&d_hout_q),
                ctx.plan,
            )?;
            // aggregate_grad_alpha shares the quantized output gradient
            let d_hout_q2 = cache.node("d_h_out", &d_concat, spec, rng)?;
            let hp_q = cache.node_scaled("h_prime", &ctx.h_prime, hp_params, spec, rng)?;
            let d_alpha = sddmm_dot(
                edges,
                NodeOperand::Quantized(&d_hout_q2),
                NodeOperand::Quantized(&hp_q),
                heads,
            )?;

            // softmax and activation backward stay full precision
            let d_scores_act = softmax_backward(&g.rev_csr, &ctx.alpha, &d_alpha)?;
            let d_scores =
                leaky_relu_backward_edges(&d_scores_act, &ctx.scores_pre, p.leaky_slope);

            // incidence aggregation of the edge-score gradients
            let d_scores_q = cache.edge("d_scores", &d_scores, spec, rng)?;
            let d_s = incidence_spmm(&g.rev_incidence, EdgeOperand::Quantized(&d_scores_q))?;
            let d_scores_q2 = cache.edge("d_scores", &d_scores, spec, rng)?;
            let d_d = incidence_spmm(&g.incidence, EdgeOperand::Quantized(&d_scores_q2))?;

            // consolidation backward
            let d_s_q = cache.node("d_s", &d_s, spec, rng)?;
            let hp_q2 = cache.node_scaled("h_prime", &ctx.h_prime, hp_params, spec, rng)?;
            let d_a_src = head_weighted_sum_q(&d_s_q, &hp_q2)?;
            let d_d_q = cache.node("d_d", &d_d, spec, rng)?;
            let hp_q3 = cache.node_scaled("h_prime", &ctx.h_prime, hp_params, spec, rng)?;
            let d_a_dst = head_weighted_sum_q(&d_d_q, &hp_q3)?;

            let d_s_q2 = cache.node("d_s", &d_s, spec, rng)?;
            let a_src_q = cache.node("a_src", &p.a_src, spec, rng)?;
            let d_hp_s = head_scale_rows_q(&d_s_q2, &a_src_q)?;
            let d_d_q2 = cache.node("d_d", &d_d, spec, rng)?;
            let a_dst_q = cache.node("a_dst", &p.a_dst, spec, rng)?;
            let d_hp_d = head_scale_rows_q(&d_d_q2, &a_dst_q)?;

            let mut d_h_prime = d_h_prime_agg;
            d_h_prime.add_assign(&d_hp_s)?;
            d_h_prime.add_assign(&d_hp_d)?;

            // projection backward reuses the forward's quantized input and
            // weights; the summed projection gradient is shared by both
            // products
            let h_in_q = cache.node("h_in", &ctx.h_in, spec, rng)?;
            let d_hp_q = cache.node("d_h_prime", &d_h_prime, spec, rng)?;
            let d_w = qgemm_with_cached(
                GemmOperand::Quantized(&h_in_q.transposed()),
                GemmOperand::Quantized(&d_hp_q),
                spec,
                rng,
            )?
            .c;
            let d_hp_q2 = cache.node("d_h_prime", &d_h_prime, spec, rng)?;
            let w_q = cache.node("w", &p.w, spec, rng)?;
            let d_h_in = qgemm_with_cached(
                GemmOperand::Quantized(&d_hp_q2),
                GemmOperand::Quantized(&w_q.transposed()),
                spec,
                rng,
            )?
            .c;
            Ok(GatGrads {
                d_h_in,
                d_w,
                d_a_src,
                d_a_dst,
            })
        }
    }
}

/// GCN layer parameters: the projection weights.
#[derive(Debug, Clone)]
pub struct GcnLayerParams {
    pub w: DenseTensor,
}

pub struct GcnContext {
    pub mode: Precision,
    pub plan: KernelPlan,
    pub h_in: DenseTensor,
    pub cache: QuantCache,
    pub out_shape: (usize, usize),
}

pub struct GcnGrads {
    pub d_h_in: DenseTensor,
    pub d_w: DenseTensor,
}

/// GCN forward: `h_out = A_norm . (h_in . w)` with per-edge normalization
/// coefficients in full precision.
pub fn gcn_forward(
    p: &GcnLayerParams,
    g: &GraphViews,
    norm: &EdgeFeatures,
    h_in: &DenseTensor,
    mode: Precision,
    k_max: usize,
    rng: &mut RngState,
) -> Result<(DenseTensor, GcnContext), OpsError> {
    h_in.check_finite("gcn input")?;
    if p.w.rows() != h_in.cols() {
        return Err(OpsError::ShapeMismatch {
            op: "gcn layer shapes",
            left: h_in.shape(),
            right: p.w.shape(),
        });
    }
    let plan = plan_kernels(1, p.w.cols(), k_max);
    let mut cache = QuantCache::new(match mode {
        Precision::Fp32 => false,
        Precision::Quantized(spec) => spec.reuse,
    });
    let h_out = match mode {
        Precision::Fp32 => {
            let x1 = gemm_f32(h_in, &p.w)?;
            spmm_edge_scaled(&g.rev_csr, norm, NodeOperand::Dense(&x1), plan)?
        }
        Precision::Quantized(spec) => {
            let h_in_q = cache.node("h_in", h_in, spec, rng)?;
            let w_q = cache.node("w", &p.w, spec, rng)?;
            let r = qgemm_with_cached(
                GemmOperand::Quantized(&h_in_q),
                GemmOperand::Quantized(&w_q),
                spec,
                rng,
            )?;
            let x1_q = cache.node_scaled(
                "x1",
                &r.c,
                QuantParams {
                    bits: spec.bits,
                    scale: r.s_c,
                },
                spec,
                rng,
            )?;
            spmm_edge_scaled(&g.rev_csr, norm, NodeOperand::Quantized(&x1_q), plan)?
        }
    };
    let ctx = GcnContext {
        mode,
        plan,
        h_in: h_in.clone(),
        cache,
        out_shape: h_out.shape(),
    };
    Ok((h_out, ctx))
}

/// GCN backward: `d_x1 = A_norm^T . d_h_out` over the reversed graph, then
/// the projection backward with the forward's cached quantized operands.
pub fn gcn_backward(
    p: &GcnLayerParams,
    g: &GraphViews,
    norm: &EdgeFeatures,
    ctx: &mut GcnContext,
    d_out: &DenseTensor,
    rng: &mut RngState,
) -> Result<GcnGrads, OpsError> {
    if d_out.shape() != ctx.out_shape {
        return Err(OpsError::ShapeMismatch {
            op: "gcn_backward output gradient",
            left: d_out.shape(),
            right: ctx.out_shape,
        });
    }
    match ctx.mode {
        Precision::Fp32 => {
            let d_x1 = spmm_edge_scaled(&g.csr, norm, NodeOperand::Dense(d_out), ctx.plan)?;
            let d_w = gemm_f32(&ctx.h_in.transposed(), &d_x1)?;
            let d_h_in = gemm_f32(&d_x1, &p.w.transposed())?;
            Ok(GcnGrads { d_h_in, d_w })
        }
        Precision::Quantized(spec) => {
            let cache = &mut ctx.cache;
            let d_hout_q = cache.node("d_h_out", d_out, spec, rng)?;
            let d_x1 = spmm_edge_scaled(
                &g.csr,
                norm,
                NodeOperand::Quantized(&d_hout_q),
                ctx.plan,
            )?;
            let h_in_q = cache.node("h_in", &ctx.h_in, spec, rng)?;
            let d_x1_q = cache.node("d_x1", &d_x1, spec, rng)?;
            let d_w = qgemm_with_cached(
                GemmOperand::Quantized(&h_in_q.transposed()),
                GemmOperand::Quantized(&d_x1_q),
                spec,
                rng,
            )?
            .c;
            let d_x1_q2 = cache.node("d_x1", &d_x1, spec, rng)?;
            let w_q = cache.node("w", &p.w, spec, rng)?;
            let d_h_in = qgemm_with_cached(
                GemmOperand::Quantized(&d_x1_q2),
                GemmOperand::Quantized(&w_q.transposed()),
                spec,
                rng,
            )?
            .c;
            Ok(GcnGrads { d_h_in, d_w })
        }
    }
}

/// Mean negative log-softmax over the given rows, with the gradient
/// `(softmax - onehot) / |rows|` scattered back to those rows. The loss
/// reduction runs in f64.
pub fn cross_entropy_masked(
    logits: &DenseTensor,
    labels: &[usize],
    rows: &[usize],
) -> Result<(f64, DenseTensor), OpsError> {
    let classes = logits.cols();
    if labels.len() != logits.rows() {
        return Err(OpsError::BadShape {
            what: "label count",
            expected: logits.rows(),
            got: labels.len(),
        });
    }
    let mut grad = DenseTensor::zeros(logits.rows(), classes);
    let mut loss = 0.0f64;
    let inv = 1.0 / rows.len().max(1) as f64;
    for &r in rows {
        let label = labels[r];
        if label >= classes {
            return Err(OpsError::LabelOutOfRange {
                label,
                classes,
            });
        }
        let row = logits.row(r);
        let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let mut denom = 0.0f64;
        for &z in row {
            denom += ((z - m) as f64).exp();
        }
        loss += -(((row[label] - m) as f64) - denom.ln()) * inv;
        let grow = grad.row_mut(r);
        for (c, &z) in row.iter().enumerate() {
            let softmax = ((z - m) as f64).exp() / denom;
            grow[c] = ((softmax - (c == label) as usize as f64) * inv) as f32;
        }
    }
    Ok((loss, grad))
}

/// Cross entropy over every row.
pub fn cross_entropy(
    logits: &DenseTensor,
    labels: &[usize],
) -> Result<(f64, DenseTensor), OpsError> {
    let rows: Vec<usize> = (0..logits.rows()).collect();
    cross_entropy_masked(logits, labels, &rows)
}

/// Plain SGD on FP32 master weights: `w -= lr * g`. Gradients reaching
/// this point are already dequantized; the updated weights are quantized
/// only when the next iteration consumes them.
pub fn sgd_update(w: &mut DenseTensor, g: &DenseTensor, lr: f32) -> Result<(), OpsError> {
    if w.shape() != g.shape() {
        return Err(OpsError::ShapeMismatch {
            op: "sgd_update",
            left: w.shape(),
            right: g.shape(),
        });
    }
    for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *wv -= lr * gv;
    }
    Ok(())
}

/// Argmax class predictions per row; ties resolve to the lowest index.
pub fn predictions(logits: &DenseTensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(logits: &DenseTensor, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let preds = predictions(logits);
    let correct = rows.iter().filter(|&&r| preds[r] == labels[r]).count();
    correct as f64 / rows.len() as f64
}
