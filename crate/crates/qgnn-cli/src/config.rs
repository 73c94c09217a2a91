//! Training configuration and its validation rules.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Gcn,
    Gat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionMode {
    Fp32,
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitsChoice {
    Fixed(u8),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingMode {
    Stochastic,
    Nearest,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bits=auto requires precision=quant")]
    AutoBitsNeedsQuant,
    #[error("bit width {0} outside [2, 8]")]
    BitsOutOfRange(u8),
    #[error("hidden size {hidden} is not divisible by {heads} heads")]
    HiddenNotDivisible { hidden: usize, heads: usize },
    #[error("heads must be >= 1")]
    NoHeads,
    #[error("epochs must be >= 1")]
    NoEpochs,
    #[error("{what} must be positive")]
    NonPositive { what: &'static str },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: Model,
    pub precision: PrecisionMode,
    pub bits: BitsChoice,
    pub epochs: usize,
    pub lr: f32,
    pub hidden: usize,
    pub heads: usize,
    pub seed: u64,
    pub leaky_slope: f32,
    pub k_max: usize,
    /// Ablation: also quantize the layer before the softmax/loss.
    pub quantize_last: bool,
    pub rounding: RoundingMode,
    /// Cache quantized tensors for reuse across consumer sites.
    pub reuse: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: Model::Gcn,
            precision: PrecisionMode::Fp32,
            bits: BitsChoice::Fixed(8),
            epochs: 200,
            lr: 0.01,
            hidden: 128,
            heads: 4,
            seed: 0,
            leaky_slope: 0.2,
            k_max: 6,
            quantize_last: false,
            rounding: RoundingMode::Stochastic,
            reuse: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bits == BitsChoice::Auto && self.precision != PrecisionMode::Quantized {
            return Err(ConfigError::AutoBitsNeedsQuant);
        }
        if let BitsChoice::Fixed(b) = self.bits {
            if !(2..=8).contains(&b) {
                return Err(ConfigError::BitsOutOfRange(b));
            }
        }
        if self.heads == 0 {
            return Err(ConfigError::NoHeads);
        }
        if self.model == Model::Gat && self.hidden % self.heads != 0 {
            return Err(ConfigError::HiddenNotDivisible {
                hidden: self.hidden,
                heads: self.heads,
            });
        }
        if self.epochs == 0 {
            return Err(ConfigError::NoEpochs);
        }
        if self.lr <= 0.0 {
            return Err(ConfigError::NonPositive { what: "lr" });
        }
        if self.hidden == 0 {
            return Err(ConfigError::NonPositive { what: "hidden" });
        }
        if self.k_max == 0 {
            return Err(ConfigError::NonPositive { what: "kmax" });
        }
        Ok(())
    }
}
