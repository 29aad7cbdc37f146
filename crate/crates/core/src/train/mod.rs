//! Fine-tuning: cross-entropy loss, Adam, mini-batch training and grid search.

mod adam;
mod fit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use fit::{
    encode_dataset, evaluate, fine_tune, grid_search, predict_logits, write_history, ClassMetrics,
    EpochRecord, Evaluation, Example, GridResult, TrainHistory,
};

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter group `{0}`")]
    NonFiniteGradient(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// English fine-tuning settings: 2 epochs, batch 32, learning rate 1.5e-5.
    pub fn english() -> Self {
        TrainConfig {
            learning_rate: 1.5e-5,
            ..TrainConfig::default()
        }
    }

    /// Arabic fine-tuning settings: 2 epochs, batch 32, learning rate 2e-5.
    pub fn arabic() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// `-log softmax(logits)[label]` and its gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy(logits: [f64; 2], positive: bool) -> (f64, [f64; 2]) {
    let max = logits[0].max(logits[1]);
    let e0 = (logits[0] - max).exp();
    let e1 = (logits[1] - max).exp();
    let sum = e0 + e1;
    let lse = max + sum.ln();
    let target = usize::from(positive);
    let loss = lse - logits[target];
    let mut grad = [e0 / sum, e1 / sum];
    grad[target] -= 1.0;
    (loss, grad)
}
