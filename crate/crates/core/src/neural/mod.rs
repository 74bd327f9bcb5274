//! A small encoder–decoder transformer in `f64` with exact reverse-mode gradients.

pub mod checkpoint;
mod decode;
pub mod layers;
pub mod matrix;
mod model;

pub use checkpoint::{Checkpoint, OptimizerState, CHECKPOINT_VERSION};
pub use decode::{DecodeOptions, DecoderState, Hypothesis};
pub use model::{cross_entropy, DecoderMode, Model, ModelConfig, TensorInfo};

use serde::{Deserialize, Serialize};

use crate::lang::LanguageTag;
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("no positions are masked")]
    EmptyMaskSet,
    #[error("target sequence has nothing to predict")]
    EmptyTarget,
    #[error("language tag {0} has no embedding row")]
    InvalidTag(LanguageTag),
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint was trained with vocabulary {found}, expected {expected}")]
    CheckpointMismatch { expected: String, found: String },
    #[error("unreadable checkpoint: {0}")]
    Checkpoint(String),
}

/// Token ids with one language tag per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub ids: Vec<u32>,
    pub tags: Vec<LanguageTag>,
}

impl ModelInput {
    pub fn uniform(ids: Vec<u32>, tag: LanguageTag) -> Self {
        let tags = vec![tag; ids.len()];
        Self { ids, tags }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl From<&TokenSequence> for ModelInput {
    fn from(s: &TokenSequence) -> Self {
        ModelInput::uniform(s.ids.clone(), s.language)
    }
}

/// A loss the model can evaluate and differentiate.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    /// Teacher-forced decoding of `tgt` from `src`: predicts `tgt.ids[1..]`.
    Sequence { src: &'a ModelInput, tgt: &'a ModelInput },
    /// Encoder-only prediction of the original ids at masked positions.
    Masked { input: &'a ModelInput, targets: &'a [(usize, u32)] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub objective: String,
    /// Summed negative log-likelihood.
    pub loss: f64,
    pub tokens: usize,
    pub grad_norm: f64,
}

impl LossReport {
    pub fn new(objective: &str, loss: f64, tokens: usize) -> Self {
        Self {
            objective: objective.to_string(),
            loss,
            tokens,
            grad_norm: 0.0,
        }
    }

    /// Sums losses and token counts; the objective name of `self` is kept.
    pub fn merge(&mut self, other: &LossReport) {
        self.loss += other.loss;
        self.tokens += other.tokens;
    }

    pub fn per_token(&self) -> f64 {
        self.loss / self.tokens.max(1) as f64
    }
}
