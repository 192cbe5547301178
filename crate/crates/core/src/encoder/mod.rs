//! Tokenizer, transformer classifier, training, prediction and
//! integrated-gradients attribution.

mod attribution;
mod checkpoint;
mod model;
mod train;
mod vocab;

pub use attribution::{integrated_gradients, integrated_gradients_ids, TokenAttribution};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{ForwardCache, LayerParams, ModelParams, TensorRef};
pub use train::{batch_loss_and_grad, cross_entropy_grad, evaluate_accuracy, train, TrainOptions, TrainReport};
pub use vocab::{
    build_vocab, tokenize, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, SPECIAL_TOKENS,
    UNK, UNK_ID,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::logcore::Label;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("input is empty after normalization")]
    DegenerateInput,
    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("record {line} has no label")]
    Unlabeled { line: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_max: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            num_heads: 4,
            d_model: 64,
            d_ff: 256,
            max_seq_len: 64,
            vocab_max: 8192,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_max", self.vocab_max),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::Config(format!("{name} must be at least 1")));
        }
        if self.max_seq_len < 3 {
            return Err(EncoderError::Config("max_seq_len must be at least 3".into()));
        }
        if self.vocab_max <= SPECIAL_TOKENS.len() {
            return Err(EncoderError::Config("vocab_max must exceed the special tokens".into()));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(EncoderError::Config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Post-softmax attention, `[layers][heads][seq][seq]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AttentionWire", into = "AttentionWire")]
pub struct AttentionStack {
    layers: usize,
    heads: usize,
    seq_len: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AttentionWire {
    num_layers: usize,
    num_heads: usize,
    seq_len: usize,
    tensors: Vec<Vec<Vec<Vec<f64>>>>,
}

impl AttentionStack {
    pub fn from_flat(layers: usize, heads: usize, seq_len: usize, data: Vec<f64>) -> Result<Self, String> {
        if data.len() != layers * heads * seq_len * seq_len {
            return Err(format!(
                "expected {} attention values for shape [{layers}][{heads}][{seq_len}][{seq_len}], got {}",
                layers * heads * seq_len * seq_len,
                data.len()
            ));
        }
        Ok(Self {
            layers,
            heads,
            seq_len,
            data,
        })
    }

    pub fn from_nested(tensors: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self, String> {
        let layers = tensors.len();
        let heads = tensors.first().map_or(0, Vec::len);
        let seq_len = tensors.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(layers * heads * seq_len * seq_len);
        for layer in tensors {
            if layer.len() != heads {
                return Err("ragged head dimension".into());
            }
            for head in layer {
                if head.len() != seq_len {
                    return Err("ragged query dimension".into());
                }
                for row in head {
                    if row.len() != seq_len {
                        return Err("attention matrices must be square".into());
                    }
                    data.extend(row);
                }
            }
        }
        Self::from_flat(layers, heads, seq_len, data)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.layers)
            .map(|l| {
                (0..self.heads)
                    .map(|h| (0..self.seq_len).map(|i| self.row(l, h, i).to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn num_heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// The `seq × seq` matrix of one head, row-major.
    pub fn head(&self, layer: usize, head: usize) -> &[f64] {
        let n2 = self.seq_len * self.seq_len;
        let start = (layer * self.heads + head) * n2;
        &self.data[start..start + n2]
    }

    /// Attention distribution of query `query` in one head.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f64] {
        let n = self.seq_len;
        &self.head(layer, head)[query * n..(query + 1) * n]
    }

    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f64 {
        self.row(layer, head, query)[key]
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        if self.seq_len == 0 {
            return 0.0;
        }
        self.data
            .chunks(self.seq_len)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<AttentionWire> for AttentionStack {
    type Error = String;
    fn try_from(w: AttentionWire) -> Result<Self, String> {
        let stack = Self::from_nested(w.tensors)?;
        let empty_ok = w.num_layers == 0 || w.num_heads == 0;
        if !empty_ok
            && (stack.layers != w.num_layers || stack.heads != w.num_heads || stack.seq_len != w.seq_len)
        {
            return Err("declared attention dims do not match tensors".into());
        }
        Ok(stack)
    }
}

impl From<AttentionStack> for AttentionWire {
    fn from(s: AttentionStack) -> Self {
        AttentionWire {
            num_layers: s.layers,
            num_heads: s.heads,
            seq_len: s.seq_len,
            tensors: s.to_nested(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Softmax probability of the predicted class.
    pub confidence: f64,
    pub tokens: Vec<String>,
    pub attentions: AttentionStack,
}

/// Classify one normalized line with dropout disabled, capturing attention.
pub fn predict(text: &str, params: &ModelParams, vocab: &Vocabulary) -> Result<Prediction, EncoderError> {
    if text.trim().is_empty() {
        return Err(EncoderError::DegenerateInput);
    }
    let (ids, tokens) = tokenize(text, vocab, params.config.max_seq_len);
    let cache = params.forward::<ChaCha8Rng>(&params.embed(&ids), None);
    let probs = cache.probabilities();
    let class = if probs[1] > probs[0] { 1 } else { 0 };
    Ok(Prediction {
        label: Label::from_index(class),
        confidence: probs[class],
        tokens,
        attentions: cache.attention_stack(),
    })
}
