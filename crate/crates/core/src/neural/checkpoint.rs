use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Network, NeuralError, StoredTensor, Tensor, Vocab};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON snapshot of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_kind: String,
    pub hyperparams: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vocab>,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn capture<T: Scalar, N: Network<T>>(
        kind: &str,
        hyperparams: serde_json::Value,
        vocab: Option<Vocab>,
        model: &N,
    ) -> Self {
        let params = model.params().into_iter().map(|(n, t)| (n, t.to_stored())).collect();
        Self { format_version: CHECKPOINT_VERSION, model_kind: kind.to_string(), hyperparams, vocab, params }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), NeuralError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported format version {}", self.format_version)));
        }
        if self.model_kind != kind {
            return Err(NeuralError::Checkpoint(format!("expected a {kind} model, found {}", self.model_kind)));
        }
        Ok(())
    }

    /// Copies stored tensors into a model of matching structure.
    pub fn restore_into<T: Scalar, N: Network<T>>(&self, model: &mut N) -> Result<(), NeuralError> {
        let mut seen = 0;
        for (name, t) in model.params_mut() {
            let stored = self.params.get(&name).ok_or_else(|| NeuralError::Checkpoint(format!("missing {name}")))?;
            if stored.shape != t.shape() {
                return Err(NeuralError::Checkpoint(format!(
                    "{name}: stored shape {:?}, model shape {:?}",
                    stored.shape,
                    t.shape()
                )));
            }
            *t = Tensor::from_stored(stored)?;
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(NeuralError::Checkpoint("checkpoint has unexpected tensors".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(s).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }

    /// Content hash of the serialized form.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let s = std::fs::read_to_string(path).map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
