//! Trainable classifiers over token sequences, and a logistic-regression
//! solver for the tabular task.

mod logistic;
mod network;
mod train;

pub use logistic::LogisticRegression;
pub use network::{forward, forward_dense, Bound, EncodedBatch, Forward, InputMode};
pub use train::{train, EpochRecord, TrainedModel};

use serde::{Deserialize, Serialize};

use crate::data::SPECIAL_TOKENS;
use crate::grad::{AdamConfig, GradError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    BilstmAttentionSingle,
    BilstmAttentionPaired,
}

impl Architecture {
    pub fn has_attention(self) -> bool {
        !matches!(self, Architecture::Linear)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub vocab_size: usize,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: AdamConfig,
}

fn default_dim() -> usize {
    16
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    32
}

impl ModelConfig {
    pub fn new(architecture: Architecture, vocab_size: usize, num_classes: usize) -> Self {
        Self {
            architecture,
            vocab_size,
            embedding_dim: default_dim(),
            hidden_dim: default_dim(),
            num_classes,
            max_epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < SPECIAL_TOKENS.len() {
            return Err(ModelError::Config(format!("vocab_size {} below the reserved tokens", self.vocab_size)));
        }
        if self.num_classes < 2 {
            return Err(ModelError::Config("num_classes must be at least 2".into()));
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config("dimensions, batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}
