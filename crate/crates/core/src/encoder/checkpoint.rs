//! Self-describing JSON checkpoint: format tag, version, config, vocabulary
//! and every parameter tensor with its declared shape.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::train::initial_params;
use super::{EncoderConfig, EncoderError, ModelParams, TrainReport, Vocabulary};

pub const CHECKPOINT_FORMAT: &str = "logsight-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: ModelParams,
    pub report: Option<TrainReport>,
}

#[derive(Serialize, Deserialize)]
struct TensorWire {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointWire {
    format: String,
    version: u32,
    config: EncoderConfig,
    vocab: Vocabulary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<TrainReport>,
    tensors: Vec<TensorWire>,
}

impl Checkpoint {
    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }

    pub fn to_json(&self) -> String {
        let wire = CheckpointWire {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.params.config.clone(),
            vocab: self.vocab.clone(),
            report: self.report.clone(),
            tensors: self
                .params
                .tensors()
                .into_iter()
                .map(|t| TensorWire {
                    name: t.name,
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&wire).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EncoderError> {
        // Check the header first so version errors are reported as such.
        #[derive(Deserialize)]
        struct Header {
            format: Option<String>,
            version: Option<u32>,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| EncoderError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if header.format.as_deref() != Some(CHECKPOINT_FORMAT) {
            return Err(EncoderError::Checkpoint("not a logsight checkpoint".into()));
        }
        match header.version {
            Some(CHECKPOINT_VERSION) => {}
            Some(v) => {
                return Err(EncoderError::Checkpoint(format!(
                    "unsupported checkpoint version {v} (expected {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(EncoderError::Checkpoint("missing version field".into())),
        }
        let wire: CheckpointWire = serde_json::from_str(text)
            .map_err(|e| EncoderError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        wire.config.validate()?;
        if wire.vocab.len() > wire.config.vocab_max {
            return Err(EncoderError::Checkpoint("vocabulary exceeds vocab_max".into()));
        }

        let mut params = initial_params(&wire.config, wire.vocab.len());
        let expected: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        if expected.len() != wire.tensors.len() {
            return Err(EncoderError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                wire.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&wire.tensors) {
            if &t.name != name || &t.shape != shape {
                return Err(EncoderError::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    t.name, t.shape
                )));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(EncoderError::Checkpoint(format!("tensor {name} has wrong element count")));
            }
        }
        for (dst, t) in params.tensors_mut().into_iter().zip(&wire.tensors) {
            dst.copy_from_slice(&t.data);
        }
        Ok(Self {
            vocab: wire.vocab,
            params,
            report: wire.report,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
