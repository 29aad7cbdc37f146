//! Small transformer encoder for binary sequence classification.
//!
//! Post-norm blocks (self-attention, residual, layer norm, GELU feed-forward,
//! residual, layer norm) over learned token and position embeddings, followed
//! by one of two heads:
//!
//! - [`HeadVariant::StandardPooled`]: first-position vector of the last layer
//!   through a tanh dense layer.
//! - [`HeadVariant::MeanLastTwo`]: element-wise mean of the last two layers'
//!   hidden states, averaged over non-padding positions.
//!
//! Both heads apply dropout to the pooled vector before the two-logit
//! classifier. Gradients are computed by hand in [`backward`] and are checked
//! against central differences in the tests.

mod checkpoint;
mod encoder;
pub mod ops;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use encoder::{
    apply_dropout, backward, classify, forward, forward_trace, pool_mean_last_two, pool_standard,
    ForwardTrace, HiddenStates,
};
pub use weights::{init_weights, EncoderWeights, LayerWeights, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    StandardPooled,
    MeanLastTwo,
}

impl std::str::FromStr for HeadVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard_pooled" => Ok(HeadVariant::StandardPooled),
            "mean_last_two" => Ok(HeadVariant::MeanLastTwo),
            other => Err(format!("unknown head variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logits {
    pub negative: f64,
    pub positive: f64,
}

impl Logits {
    pub fn new(negative: f64, positive: f64) -> Self {
        Logits { negative, positive }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.negative, self.positive]
    }

    pub fn predicts_positive(&self) -> bool {
        self.positive > self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_p: f64,
    /// Dropout on the pooled vector; falls back to `dropout_p`.
    pub head_dropout_p: Option<f64>,
    pub head_variant: HeadVariant,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::desk(0)
    }
}

impl EncoderConfig {
    /// 2 layers, 32 dims, 2 heads.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            hidden_dim: 32,
            num_heads: 2,
            ff_dim: 128,
            max_seq_len: 64,
            vocab_size,
            dropout_p: 0.1,
            head_dropout_p: None,
            head_variant: HeadVariant::MeanLastTwo,
        }
    }

    /// BERT-base dimensions.
    pub fn reference(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ff_dim: 3072,
            max_seq_len: 512,
            ..EncoderConfig::desk(vocab_size)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn head_dropout(&self) -> f64 {
        self.head_dropout_p.unwrap_or(self.dropout_p)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.num_layers == 0 || self.hidden_dim == 0 || self.num_heads == 0 || self.ff_dim == 0 {
            return err("num_layers, hidden_dim, num_heads and ff_dim must be positive".into());
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return err(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.max_seq_len < 2 {
            return err(format!("max_seq_len {} < 2", self.max_seq_len));
        }
        if self.vocab_size == 0 {
            return err("vocab_size must be positive".into());
        }
        for (name, p) in [("dropout_p", Some(self.dropout_p)), ("head_dropout_p", self.head_dropout_p)] {
            if let Some(p) = p {
                if !(0.0..1.0).contains(&p) {
                    return err(format!("{name} {p} outside [0, 1)"));
                }
            }
        }
        if self.head_variant == HeadVariant::MeanLastTwo && self.num_layers < 2 {
            return err("mean_last_two head needs at least 2 layers".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = EncoderConfig {
            hidden_dim: 33,
            ..EncoderConfig::desk(10)
        };
        assert!(matches!(cfg.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn mean_head_needs_two_layers() {
        let cfg = EncoderConfig {
            num_layers: 1,
            ..EncoderConfig::desk(10)
        };
        assert!(cfg.validate().is_err());
        let cfg = EncoderConfig {
            head_variant: HeadVariant::StandardPooled,
            ..cfg
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn reference_config_is_valid() {
        let cfg = EncoderConfig::reference(30_522);
        cfg.validate().unwrap();
        assert_eq!(cfg.head_dim(), 64);
    }

    #[test]
    fn dropout_range_checked() {
        let cfg = EncoderConfig {
            dropout_p: 1.0,
            ..EncoderConfig::desk(10)
        };
        assert!(cfg.validate().is_err());
    }
}
