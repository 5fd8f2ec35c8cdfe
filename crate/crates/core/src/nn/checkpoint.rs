//! Checkpoint files: a header line naming the model kind and format
//! version, followed by one JSON document holding the configuration, the
//! vocabulary and every parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{CoreError, Result};

const MAGIC: &str = "empathic-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    /// Optimization epochs applied so far; 0 means freshly initialized.
    #[serde(default)]
    pub epochs_trained: usize,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new<C: Serialize>(kind: &str, config: &C, vocab: &[String], params: &ParamStore) -> Checkpoint {
        Checkpoint {
            kind: kind.to_string(),
            epochs_trained: 0,
            config: serde_json::to_value(config).expect("config serializes"),
            vocab: vocab.to_vec(),
            params: params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    tensor: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let body = serde_json::to_string(self).expect("checkpoint serializes");
        format!("{MAGIC} v{VERSION} {}\n{body}\n", self.kind)
    }

    pub fn from_text(text: &str, expected_kind: &str) -> Result<Checkpoint> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| CoreError::Checkpoint("missing header line".into()))?;
        let expected = format!("{MAGIC} v{VERSION} {expected_kind}");
        if header.trim() != expected {
            return Err(CoreError::Checkpoint(format!(
                "expected header `{expected}`, found `{}`",
                header.trim()
            )));
        }
        let ckpt: Checkpoint =
            serde_json::from_str(body).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        Ok(ckpt)
    }

    pub fn config<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| CoreError::Checkpoint(e.to_string()))
    }

    /// Copy stored tensors into `params`, matching by name and shape.
    pub fn restore(&self, params: &mut ParamStore) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(CoreError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                params.len()
            )));
        }
        for (stored, p) in self.params.iter().zip(params.iter_mut()) {
            if stored.name != p.name || stored.tensor.shape() != p.value.shape() {
                return Err(CoreError::Checkpoint(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    stored.name,
                    stored.tensor.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            if stored.tensor.data.len() != p.value.len() {
                return Err(CoreError::Checkpoint(format!("tensor `{}` has the wrong length", stored.name)));
            }
            p.value = stored.tensor.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path, expected_kind: &str) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Checkpoint::from_text(&text, expected_kind)
    }
}
