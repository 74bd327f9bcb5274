//! Binary checkpoint: magic, JSON header, then little-endian `f64` payload.
//!
//! ```text
//! b"CODEIRCK" | u32 version | u64 header length | header JSON | params | [adam m | adam v]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, NeuralError, TensorInfo};

const MAGIC: &[u8; 8] = b"CODEIRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_hash: String,
    /// Number of optimizer updates applied.
    pub step: u64,
    pub params: Vec<f64>,
    pub optimizer: Option<OptimizerState>,
    /// Free-form metadata (training configuration, objective list).
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    param_count: usize,
    has_optimizer: bool,
    tensors: Vec<TensorInfo>,
    extra: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab_hash: &str, step: u64) -> Self {
        Self {
            config: model.config.clone(),
            vocab_hash: vocab_hash.to_string(),
            step,
            params: model.params.clone(),
            optimizer: None,
            extra: serde_json::Value::Null,
        }
    }

    pub fn model(&self) -> Result<Model, NeuralError> {
        Model::from_params(self.config.clone(), self.params.clone())
    }

    /// Fails with `CheckpointMismatch` unless the checkpoint was trained with `vocab_hash`.
    pub fn expect_vocab(&self, vocab_hash: &str) -> Result<(), NeuralError> {
        if self.vocab_hash != vocab_hash {
            return Err(NeuralError::CheckpointMismatch {
                expected: vocab_hash.to_string(),
                found: self.vocab_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NeuralError> {
        let model = self.model()?;
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            param_count: self.params.len(),
            has_optimizer: self.optimizer.is_some(),
            tensors: model.tensors().to_vec(),
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let floats = self.params.len() * if self.optimizer.is_some() { 3 } else { 1 };
        let mut out = Vec::with_capacity(8 + 4 + 8 + json.len() + 8 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut push = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        push(&self.params);
        if let Some(opt) = &self.optimizer {
            push(&opt.m);
            push(&opt.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, NeuralError> {
        let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated header"))?;
        let json = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let payload = &body[hlen..];
        let n = header.param_count;
        let expected = 8 * n * if header.has_optimizer { 3 } else { 1 };
        if payload.len() != expected {
            return Err(NeuralError::Checkpoint(format!(
                "payload has {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = floats[..n].to_vec();
        let optimizer = header.has_optimizer.then(|| OptimizerState {
            m: floats[n..2 * n].to_vec(),
            v: floats[2 * n..].to_vec(),
        });
        let ck = Checkpoint {
            config: header.config,
            vocab_hash: header.vocab_hash,
            step: header.step,
            params,
            optimizer,
            extra: header.extra,
        };
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, NeuralError> {
        let bytes = std::fs::read(path).map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))?;
        Checkpoint::from_bytes(&bytes)
    }
}
