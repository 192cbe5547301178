use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{EncoderConfig, EncoderError};
use crate::logcore::LogRecord;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const SPECIAL_TOKENS: [&str; 4] = [BOS, EOS, PAD, UNK];

pub const BOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const PAD_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Word-level vocabulary; special tokens occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from an id-ordered token list. The list must start with the
    /// four special tokens and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens.iter().zip(SPECIAL_TOKENS).any(|(a, b)| a != b)
        {
            return Err(EncoderError::Vocabulary(
                "vocabulary must start with <s>, </s>, <pad>, <unk>".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(EncoderError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = EncoderError;
    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.id_to_token
    }
}

/// Frequency-ranked whitespace tokens (ties broken lexicographically),
/// truncated to `vocab_max - 4`, with the special tokens first.
pub fn build_vocab(train: &[LogRecord], config: &EncoderConfig) -> Result<Vocabulary, EncoderError> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in train {
        for w in r.normalized_text.split_whitespace() {
            if !SPECIAL_TOKENS.contains(&w) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(config.vocab_max.saturating_sub(SPECIAL_TOKENS.len()));
    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(w, _)| w.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Token ids and strings for `<s> words… </s>`, truncated to `max_seq_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_seq_len: usize) -> (Vec<usize>, Vec<String>) {
    let budget = max_seq_len.saturating_sub(2);
    let mut ids = vec![BOS_ID];
    let mut tokens = vec![BOS.to_string()];
    for w in text.split_whitespace().take(budget) {
        match vocab.id(w) {
            Some(id) => {
                ids.push(id);
                tokens.push(w.to_string());
            }
            None => {
                ids.push(UNK_ID);
                tokens.push(UNK.to_string());
            }
        }
    }
    ids.push(EOS_ID);
    tokens.push(EOS.to_string());
    (ids, tokens)
}
