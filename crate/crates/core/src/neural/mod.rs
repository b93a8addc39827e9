//! Small reverse-mode autograd with recurrent triage classifiers and a causal
//! transformer for next-area prediction.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod transformer;
pub mod triage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, SavedModel};
pub use params::{ModelParams, OptimizerConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use train::{train_transformer, train_triage, TrainReport};
pub use transformer::{TransformerArch, TransformerModel};
pub use triage::{TriageArch, TriageModel, TriageVariant};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("dataset has no usable sequences")]
    EmptyDataset,
    #[error("sequence element has no ground-truth label")]
    Unlabeled,
    #[error("area token {0} outside the vocabulary of {1}")]
    BadToken(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

impl NeuralError {
    /// True for numeric failures (divergence or non-finite gradients).
    pub fn is_numeric(&self) -> bool {
        matches!(self, NeuralError::Divergence(_) | NeuralError::NonFiniteGradient(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Seconds.
    pub decay_half_life: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_size: usize,
    pub ode_steps: usize,
    pub time2vec_k: usize,
    /// Transformer context and truncation length.
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            weight_decay: 1e-5,
            batch_size: 1,
            decay_half_life: 60.0,
            epochs: 20,
            seed: 0,
            hidden_size: 16,
            ode_steps: 5,
            time2vec_k: 7,
            window: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::BadConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.decay_half_life > 0.0 && self.decay_half_life.is_finite()) {
            return bad("decay_half_life must be positive");
        }
        if self.batch_size == 0 || self.hidden_size == 0 || self.ode_steps == 0 || self.window == 0 {
            return bad("batch_size, hidden_size, ode_steps and window must be at least 1");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..OptimizerConfig::default()
        }
    }
}
