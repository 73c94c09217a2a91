//! Two-layer GCN/GAT training: model assembly, the epoch loop with
//! instrumented metrics, and automatic bit-width derivation.

use serde::Serialize;

use qgnn::counters;
use qgnn::layers::{
    accuracy, cross_entropy_masked, gat_backward, gat_forward, gcn_backward, gcn_forward,
    sgd_update, GatLayerParams, GcnLayerParams, HeadCombine, Precision,
};
use qgnn::quant::{BitSelection, QuantSpec, Rounding};
use qgnn::rng::RngState;
use qgnn::tensor::DenseTensor;
use qgnn::OpsError;
use thiserror::Error;

use crate::config::{BitsChoice, Model, PrecisionMode, RoundingMode, TrainConfig};
use crate::data::LoadedData;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

/// One epoch of the metrics stream.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Tensor-level quantization invocations this epoch.
    pub quantize_calls: u64,
    /// Consumptions served from the quantized-tensor cache this epoch.
    pub quantize_reuses: u64,
    /// Feature-operand bytes randomly accessed by sparse sweeps.
    pub feature_bytes: u64,
    /// Uniform draws consumed by stochastic rounding.
    pub rng_draws: u64,
    pub gemm_us: u64,
    pub qgemm_us: u64,
    pub spmm_us: u64,
    pub sddmm_us: u64,
    pub softmax_us: u64,
    pub quantize_us: u64,
}

/// Stream-final summary: best validation accuracy and the test accuracy at
/// that epoch.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc_at_best_val: f64,
    pub final_test_acc: f64,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_bits: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit_error_table: Option<Vec<(u8, f32)>>,
}

pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
}

enum ModelParams {
    Gcn {
        l1: GcnLayerParams,
        l2: GcnLayerParams,
    },
    Gat {
        l1: GatLayerParams,
        l2: GatLayerParams,
    },
}

fn glorot(rows: usize, cols: usize, rng: &mut RngState) -> DenseTensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseTensor::from_fn(rows, cols, |_, _| {
        ((rng.next_unit() * 2.0 - 1.0) * bound) as f32
    })
}

fn init_model(cfg: &TrainConfig, in_dim: usize, classes: usize, rng: &mut RngState) -> ModelParams {
    match cfg.model {
        Model::Gcn => ModelParams::Gcn {
            l1: GcnLayerParams {
                w: glorot(in_dim, cfg.hidden, rng),
            },
            l2: GcnLayerParams {
                w: glorot(cfg.hidden, classes, rng),
            },
        },
        Model::Gat => {
            let dh = cfg.hidden / cfg.heads;
            ModelParams::Gat {
                l1: GatLayerParams {
                    w: glorot(in_dim, cfg.hidden, rng),
                    a_src: glorot(cfg.heads, dh, rng),
                    a_dst: glorot(cfg.heads, dh, rng),
                    leaky_slope: cfg.leaky_slope,
                },
                l2: GatLayerParams {
                    w: glorot(cfg.hidden, cfg.heads * classes, rng),
                    a_src: glorot(cfg.heads, classes, rng),
                    a_dst: glorot(cfg.heads, classes, rng),
                    leaky_slope: cfg.leaky_slope,
                },
            }
        }
    }
}

fn quant_spec(cfg: &TrainConfig, bits: u8) -> QuantSpec {
    QuantSpec {
        bits,
        rounding: match cfg.rounding {
            RoundingMode::Stochastic => Rounding::Stochastic,
            RoundingMode::Nearest => Rounding::Nearest,
        },
        reuse: cfg.reuse,
    }
}

/// Layer modes for one step: the hidden layer follows the global mode, the
/// layer before the softmax/loss stays full precision unless the ablation
/// flag quantizes it.
fn layer_modes(cfg: &TrainConfig, bits: u8) -> (Precision, Precision) {
    match cfg.precision {
        PrecisionMode::Fp32 => (Precision::Fp32, Precision::Fp32),
        PrecisionMode::Quantized => {
            let spec = quant_spec(cfg, bits);
            let last = if cfg.quantize_last {
                Precision::Quantized(spec)
            } else {
                Precision::Fp32
            };
            (Precision::Quantized(spec), last)
        }
    }
}

/// Resolves the bit width: fixed, or derived from the first layer's output
/// during the initial epoch.
fn resolve_bits(
    cfg: &TrainConfig,
    data: &LoadedData,
) -> Result<(u8, Option<BitSelection>), TrainError> {
    match (cfg.precision, cfg.bits) {
        (PrecisionMode::Quantized, BitsChoice::Auto) => {
            let sel = derive_bits(cfg, data)?;
            Ok((sel.bits, Some(sel)))
        }
        (_, BitsChoice::Fixed(b)) => Ok((b, None)),
        (PrecisionMode::Fp32, BitsChoice::Auto) => {
            unreachable!("validated: auto bits requires quantized precision")
        }
    }
}

/// Runs one full-precision forward pass of the first layer with the
/// seed-initialized weights and sweeps candidate bit widths over its
/// output tensor. The sweep uses nearest rounding, so the table is free of
/// sampling noise and non-increasing in the bit width.
pub fn derive_bits(cfg: &TrainConfig, data: &LoadedData) -> Result<BitSelection, TrainError> {
    cfg.validate()?;
    let mut rng = RngState::from_seed(cfg.seed);
    let model = init_model(cfg, data.features.cols(), data.classes, &mut rng);
    let out = match &model {
        ModelParams::Gcn { l1, .. } => {
            let (out, _) = gcn_forward(
                l1,
                &data.views,
                &data.norm,
                &data.features,
                Precision::Fp32,
                cfg.k_max,
                &mut rng,
            )?;
            out
        }
        ModelParams::Gat { l1, .. } => {
            let (out, _) = gat_forward(
                l1,
                &data.views,
                &data.features,
                Precision::Fp32,
                HeadCombine::Concat,
                cfg.k_max,
                &mut rng,
            )?;
            out
        }
    };
    let candidates = qgnn::quant::default_candidates();
    Ok(qgnn::quant::select_bits(
        &out,
        qgnn::quant::ERROR_THRESHOLD,
        &candidates,
    )?)
}

/// Trains the two-layer model full-batch, emitting one metrics record per
/// epoch through `sink`. Deterministic for a fixed seed.
pub fn run_train(
    cfg: &TrainConfig,
    data: &LoadedData,
    mut sink: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let (bits, selection) = resolve_bits(cfg, data)?;
    let mut rng = RngState::from_seed(cfg.seed);
    let mut model = init_model(cfg, data.features.cols(), data.classes, &mut rng);
    let (mode1, mode2) = layer_modes(cfg, bits);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_val = (0usize, 0.0f64, 0.0f64); // epoch, val acc, test acc
    let mut final_loss = f64::NAN;
    let mut final_test = 0.0f64;

    for epoch in 0..cfg.epochs {
        let before = counters::snapshot();
        let (loss, logits) = match &mut model {
            ModelParams::Gcn { l1, l2 } => {
                let (h1, mut ctx1) = gcn_forward(
                    l1,
                    &data.views,
                    &data.norm,
                    &data.features,
                    mode1,
                    cfg.k_max,
                    &mut rng,
                )?;
                let (logits, mut ctx2) =
                    gcn_forward(l2, &data.views, &data.norm, &h1, mode2, cfg.k_max, &mut rng)?;
                let (loss, d_logits) =
                    cross_entropy_masked(&logits, &data.labels, &data.splits.train)?;
                let g2 = gcn_backward(l2, &data.views, &data.norm, &mut ctx2, &d_logits, &mut rng)?;
                let g1 =
                    gcn_backward(l1, &data.views, &data.norm, &mut ctx1, &g2.d_h_in, &mut rng)?;
                sgd_update(&mut l2.w, &g2.d_w, cfg.lr)?;
                sgd_update(&mut l1.w, &g1.d_w, cfg.lr)?;
                (loss, logits)
            }
            ModelParams::Gat { l1, l2 } => {
                let (h1, mut ctx1) = gat_forward(
                    l1,
                    &data.views,
                    &data.features,
                    mode1,
                    HeadCombine::Concat,
                    cfg.k_max,
                    &mut rng,
                )?;
                let (logits, mut ctx2) = gat_forward(
                    l2,
                    &data.views,
                    &h1,
                    mode2,
                    HeadCombine::Mean,
                    cfg.k_max,
                    &mut rng,
                )?;
                let (loss, d_logits) =
                    cross_entropy_masked(&logits, &data.labels, &data.splits.train)?;
                let g2 = gat_backward(l2, &data.views, &mut ctx2, &d_logits, &mut rng)?;
                let g1 = gat_backward(l1, &data.views, &mut ctx1, &g2.d_h_in, &mut rng)?;
                sgd_update(&mut l2.w, &g2.d_w, cfg.lr)?;
                sgd_update(&mut l2.a_src, &g2.d_a_src, cfg.lr)?;
                sgd_update(&mut l2.a_dst, &g2.d_a_dst, cfg.lr)?;
                sgd_update(&mut l1.w, &g1.d_w, cfg.lr)?;
                sgd_update(&mut l1.a_src, &g1.d_a_src, cfg.lr)?;
                sgd_update(&mut l1.a_dst, &g1.d_a_dst, cfg.lr)?;
                (loss, logits)
            }
        };
        let delta = counters::snapshot().since(&before);
        let record = MetricsRecord {
            epoch,
            loss,
            train_acc: accuracy(&logits, &data.labels, &data.splits.train),
            val_acc: accuracy(&logits, &data.labels, &data.splits.val),
            test_acc: accuracy(&logits, &data.labels, &data.splits.test),
            quantize_calls: delta.quantize_calls,
            quantize_reuses: delta.quantize_reuses,
            feature_bytes: delta.feature_bytes,
            rng_draws: delta.rng_draws,
            gemm_us: delta.prim_time(counters::Prim::GemmF32).as_micros() as u64,
            qgemm_us: delta.prim_time(counters::Prim::QGemm).as_micros() as u64,
            spmm_us: delta.prim_time(counters::Prim::Spmm).as_micros() as u64,
            sddmm_us: delta.prim_time(counters::Prim::Sddmm).as_micros() as u64,
            softmax_us: delta.prim_time(counters::Prim::Softmax).as_micros() as u64,
            quantize_us: delta.prim_time(counters::Prim::Quantize).as_micros() as u64,
        };
        if record.val_acc > best_val.1 {
            best_val = (epoch, record.val_acc, record.test_acc);
        }
        final_loss = loss;
        final_test = record.test_acc;
        sink(&record);
        records.push(record);
    }

    Ok(TrainOutcome {
        summary: Summary {
            best_val_epoch: best_val.0,
            best_val_acc: best_val.1,
            test_acc_at_best_val: best_val.2,
            final_test_acc: final_test,
            final_loss,
            chosen_bits: selection.as_ref().map(|s| s.bits).or(match cfg.precision {
                PrecisionMode::Quantized => Some(bits),
                PrecisionMode::Fp32 => None,
            }),
            bit_error_table: selection.map(|s| s.table),
        },
        records,
    })
}
