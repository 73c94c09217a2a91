//! Per-primitive micro-benchmarks over a loaded dataset: median times in
//! full-precision and quantized modes (quantization passes included inside
//! the quantized timings), the scalar-operation model values, and the
//! random-access byte counts.
//!
//! No speedup is asserted anywhere: the byte and operation counts are the
//! testable quantities, wall-clock times are reported for inspection only.

use std::time::Instant;

use serde::Serialize;

use qgnn::counters;
use qgnn::dense::{gemm_f32, qgemm};
use qgnn::quant::QuantSpec;
use qgnn::rng::RngState;
use qgnn::sparse::{
    incidence_spmm, plan_kernels, quantize_edge_features, quantize_node_features, sddmm_add,
    sddmm_dot, spmm_edge_scaled, EdgeFeatures, EdgeOperand, NodeOperand,
};
use qgnn::tensor::DenseTensor;
use qgnn::OpsError;

use crate::data::LoadedData;

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntry {
    pub primitive: &'static str,
    pub mode: &'static str,
    pub median_us: u64,
    pub reps: usize,
    /// Feature-operand bytes randomly accessed per invocation.
    pub feature_bytes: u64,
    /// Quantization scalar ops per invocation (scale + rounding passes).
    pub quant_ops: u64,
    /// Dequantization scalar ops per invocation.
    pub dequant_ops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpModel {
    /// Quantization cost model for the GEMM inputs: 4K(M+N).
    pub gemm_quant_ops: u64,
    /// Dequantization cost model for the GEMM output: 2MN.
    pub gemm_dequant_ops: u64,
    /// Quantization cost model for the sparse sweeps: 4D(N+E).
    pub spmm_quant_ops: u64,
    /// Dequantization of the aggregated node features: 2ND.
    pub spmm_dequant_ops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub nodes: usize,
    pub edges: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub bits: u8,
    pub entries: Vec<BenchEntry>,
    pub op_model: OpModel,
    /// Quantized over full-precision byte ratio per sparse primitive.
    pub byte_ratio: f64,
}

pub struct BenchConfig {
    pub bits: u8,
    pub hidden: usize,
    pub heads: usize,
    pub reps: usize,
    pub k_max: usize,
    pub seed: u64,
}

fn median_us(mut samples: Vec<u64>) -> u64 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

fn run_case(
    reps: usize,
    mut f: impl FnMut(),
) -> (u64, counters::Snapshot) {
    // one warm-up invocation, then timed repetitions
    f();
    counters::reset();
    let before = counters::snapshot();
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f();
        times.push(t.elapsed().as_micros() as u64);
    }
    let total = counters::snapshot().since(&before);
    // per-invocation counter values
    let div = |x: u64| x / reps as u64;
    let per = counters::Snapshot {
        quantize_calls: div(total.quantize_calls),
        quantize_reuses: div(total.quantize_reuses),
        scale_pass_elems: div(total.scale_pass_elems),
        quantized_elems: div(total.quantized_elems),
        dequantized_elems: div(total.dequantized_elems),
        rng_draws: div(total.rng_draws),
        feature_bytes: div(total.feature_bytes),
        prim_nanos: total.prim_nanos,
    };
    (median_us(times), per)
}

/// Benchmarks the five quantization-aware primitives in both modes.
pub fn bench_primitives(
    data: &LoadedData,
    cfg: &BenchConfig,
) -> Result<BenchReport, OpsError> {
    let reps = cfg.reps.max(30);
    let mut rng = RngState::from_seed(cfg.seed);
    let spec = QuantSpec::new(cfg.bits);
    let v = data.views.num_nodes();
    let e = data.views.num_edges();
    let d_in = data.features.cols();
    let heads = cfg.heads;
    let dh = cfg.hidden / heads.max(1);

    let w = DenseTensor::from_fn(d_in, cfg.hidden, |i, j| {
        ((i * 31 + j * 17) % 101) as f32 * 0.019 - 0.95
    });
    let feat = DenseTensor::from_fn(v, heads * dh, |i, j| {
        ((i * 13 + j * 7) % 47) as f32 * 0.042 - 1.0
    });
    let scalars = DenseTensor::from_fn(v, heads, |i, j| ((i + j * 3) % 11) as f32 * 0.1 - 0.5);
    let alpha = EdgeFeatures::from_vec(
        e,
        heads,
        1,
        (0..e * heads).map(|t| ((t % 17) as f32) * 0.05).collect(),
    )
    .expect("edge feature shape");
    let efeat = EdgeFeatures::from_vec(
        e,
        heads,
        1,
        (0..e * heads).map(|t| ((t % 23) as f32) * 0.04 - 0.4).collect(),
    )
    .expect("edge feature shape");
    let plan = plan_kernels(heads, dh, cfg.k_max);

    let feat_q = quantize_node_features(&feat, spec, &mut rng)?;
    let scal_q = quantize_node_features(&scalars, spec, &mut rng)?;

    let mut entries = Vec::new();
    let mut push = |primitive: &'static str,
                    mode: &'static str,
                    (median, per): (u64, counters::Snapshot)| {
        entries.push(BenchEntry {
            primitive,
            mode,
            median_us: median,
            reps,
            feature_bytes: per.feature_bytes,
            quant_ops: per.quant_ops(),
            dequant_ops: per.dequant_ops(),
        });
    };

    // GEMM: features x weights; the quantized case quantizes on the fly
    // inside the timed region.
    push(
        "gemm",
        "fp32",
        run_case(reps, || {
            gemm_f32(&data.features, &w).expect("bench gemm");
        }),
    );
    {
        let mut r = RngState::from_seed(cfg.seed + 1);
        push(
            "gemm",
            "quantized",
            run_case(reps, || {
                qgemm(&data.features, &w, spec, &mut r).expect("bench qgemm");
            }),
        );
    }

    // Edge-scaled SPMM: the dedicated quantization pass is part of the
    // quantized timing.
    push(
        "spmm",
        "fp32",
        run_case(reps, || {
            spmm_edge_scaled(&data.views.rev_csr, &alpha, NodeOperand::Dense(&feat), plan)
                .expect("bench spmm");
        }),
    );
    {
        let mut r = RngState::from_seed(cfg.seed + 2);
        push(
            "spmm",
            "quantized",
            run_case(reps, || {
                let q = quantize_node_features(&feat, spec, &mut r).expect("bench quantize");
                spmm_edge_scaled(&data.views.rev_csr, &alpha, NodeOperand::Quantized(&q), plan)
                    .expect("bench spmm");
            }),
        );
    }

    push(
        "incidence_spmm",
        "fp32",
        run_case(reps, || {
            incidence_spmm(&data.views.incidence, EdgeOperand::Dense(&efeat))
                .expect("bench incidence");
        }),
    );
    {
        let mut r = RngState::from_seed(cfg.seed + 3);
        push(
            "incidence_spmm",
            "quantized",
            run_case(reps, || {
                let q = quantize_edge_features(&efeat, spec, &mut r).expect("bench quantize");
                incidence_spmm(&data.views.incidence, EdgeOperand::Quantized(&q))
                    .expect("bench incidence");
            }),
        );
    }

    push(
        "sddmm_add",
        "fp32",
        run_case(reps, || {
            sddmm_add(
                &data.views.edges.edges,
                NodeOperand::Dense(&scalars),
                NodeOperand::Dense(&scalars),
            )
            .expect("bench sddmm_add");
        }),
    );
    {
        let mut r = RngState::from_seed(cfg.seed + 4);
        push(
            "sddmm_add",
            "quantized",
            run_case(reps, || {
                let q = quantize_node_features(&scalars, spec, &mut r).expect("bench quantize");
                sddmm_add(
                    &data.views.edges.edges,
                    NodeOperand::Quantized(&q),
                    NodeOperand::Quantized(&scal_q),
                )
                .expect("bench sddmm_add");
            }),
        );
    }

    push(
        "sddmm_dot",
        "fp32",
        run_case(reps, || {
            sddmm_dot(
                &data.views.edges.edges,
                NodeOperand::Dense(&feat),
                NodeOperand::Dense(&feat),
                heads,
            )
            .expect("bench sddmm_dot");
        }),
    );
    {
        let mut r = RngState::from_seed(cfg.seed + 5);
        push(
            "sddmm_dot",
            "quantized",
            run_case(reps, || {
                let q = quantize_node_features(&feat, spec, &mut r).expect("bench quantize");
                sddmm_dot(
                    &data.views.edges.edges,
                    NodeOperand::Quantized(&q),
                    NodeOperand::Quantized(&feat_q),
                    heads,
                )
                .expect("bench sddmm_dot");
            }),
        );
    }

    let (m, k, n) = (v, d_in, cfg.hidden);
    let spmm_dim = heads * dh;
    let byte_ratio = {
        let fp = entries
            .iter()
            .find(|x| x.primitive == "spmm" && x.mode == "fp32")
            .map(|x| x.feature_bytes)
            .unwrap_or(0);
        let q = entries
            .iter()
            .find(|x| x.primitive == "spmm" && x.mode == "quantized")
            .map(|x| x.feature_bytes)
            .unwrap_or(0);
        if fp == 0 {
            0.0
        } else {
            q as f64 / fp as f64
        }
    };
    Ok(BenchReport {
        nodes: v,
        edges: e,
        feature_dim: d_in,
        hidden: cfg.hidden,
        heads,
        bits: cfg.bits,
        entries,
        op_model: OpModel {
            gemm_quant_ops: (4 * k * (m + n)) as u64,
            gemm_dequant_ops: (2 * m * n) as u64,
            spmm_quant_ops: (4 * spmm_dim * (v + e)) as u64,
            spmm_dequant_ops: (2 * v * spmm_dim) as u64,
        },
        byte_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SbmParams};

    #[test]
    fn report_contains_both_modes_for_every_primitive() {
        let d = generate(&SbmParams {
            nodes: 40,
            classes: 2,
            intra_p: 0.2,
            inter_p: 0.02,
            feature_dim: 4,
            noise: 1.0,
            seed: 2,
        })
        .unwrap();
        let data = crate::data::from_dataset(&d, 2);
        let report = bench_primitives(
            &data,
            &BenchConfig {
                bits: 8,
                hidden: 8,
                heads: 2,
                reps: 30,
                k_max: 6,
                seed: 0,
            },
        )
        .unwrap();
        for prim in ["gemm", "spmm", "incidence_spmm", "sddmm_add", "sddmm_dot"] {
            for mode in ["fp32", "quantized"] {
                assert!(
                    report
                        .entries
                        .iter()
                        .any(|x| x.primitive == prim && x.mode == mode),
                    "missing {prim}/{mode}"
                );
            }
        }
        // gemm quantization op counts match the 4K(M+N) / 2MN model
        let gemm_q = report
            .entries
            .iter()
            .find(|x| x.primitive == "gemm" && x.mode == "quantized")
            .unwrap();
        assert_eq!(gemm_q.quant_ops, report.op_model.gemm_quant_ops);
        assert_eq!(gemm_q.dequant_ops, report.op_model.gemm_dequant_ops);
        // quantized sweeps move a quarter of the bytes
        assert!((report.byte_ratio - 0.25).abs() < 1e-9);
    }
}
