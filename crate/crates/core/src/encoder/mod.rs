//! Small pre-norm transformer encoder with `[CLS]` pooling, a softmax
//! classifier and an MLP projection head for the contrastive objective.

mod checkpoint;
mod gradient;
mod model;
mod weights;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradient::embedding_gradient_check;
pub use model::{
    embed_tokens, encode_embeddings, forward, infer, predict, project, project_values, Dropout,
    ForwardOutput, Inference,
};
pub use weights::{Block, Dense, ModelParams, Norm, Weights};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("example {index}: expected sequence length {expected}, found {found}")]
    SequenceLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("example {index}: attention length {len} outside 1..={max_len}")]
    AttentionLength {
        index: usize,
        len: usize,
        max_len: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_size: usize,
    pub max_len: usize,
    pub n_classes: usize,
    /// Output width of the projection head.
    pub proj_size: usize,
    /// Number of dense layers in the projection head (GELU between them).
    pub proj_layers: usize,
    /// Dropout rate on attention and feed-forward outputs while training.
    pub dropout: f64,
}

impl ModelConfig {
    /// The desk-scale default: 2 layers, hidden 64, 4 heads, feed-forward 128,
    /// projection 32.
    pub fn toy(vocab_size: usize, n_classes: usize, max_len: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 64,
            n_layers: 2,
            n_heads: 4,
            ff_size: 128,
            max_len,
            n_classes,
            proj_size: 32,
            proj_layers: 2,
            dropout: 0.0,
        }
    }

    pub fn head_size(&self) -> usize {
        self.hidden_size / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden_size", self.hidden_size),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ff_size", self.ff_size),
            ("max_len", self.max_len),
            ("n_classes", self.n_classes),
            ("proj_size", self.proj_size),
            ("proj_layers", self.proj_layers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !self.hidden_size.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "hidden_size {} not divisible by n_heads {}",
                self.hidden_size, self.n_heads
            )));
        }
        if self.proj_size > self.hidden_size {
            return Err(ModelError::Config(format!(
                "proj_size {} exceeds hidden_size {}",
                self.proj_size, self.hidden_size
            )));
        }
        if self.max_len < 3 {
            return Err(ModelError::Config("max_len must be at least 3".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}
