//! Attention analysis over a full `[layers][heads][seq][seq]` stack.
//!
//! One pass over every head collects
//! * token saliency: attention each position receives, averaged over
//!   queries, heads and layers;
//! * head entropy: mean Shannon entropy (natural log) of the query rows,
//!   low entropy meaning a focused head;
//! * layer focus: mean inverse entropy of a layer's heads;
//! * special-token bias: heads whose mean attention onto a sentinel token
//!   exceeds a threshold.
//!
//! Values are kept at full precision; rounding happens only when they are
//! reported.

use serde::{Deserialize, Serialize};

use crate::encoder::AttentionStack;

/// Additive constant inside the entropy logarithm and the inverse-entropy
/// denominator.
pub const ENTROPY_EPSILON: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("incomplete head grouping: {0}")]
    Grouping(String),
    #[error("invalid analysis config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub top_k_tokens: usize,
    pub top_k_heads: usize,
    pub top_k_layers: usize,
    pub special_tokens: Vec<String>,
    pub bias_threshold: f64,
    pub epsilon: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            top_k_tokens: 5,
            top_k_heads: 3,
            top_k_layers: 2,
            special_tokens: ["<s>", "</s>", "[CLS]", "[SEP]"].map(String::from).to_vec(),
            bias_threshold: 0.5,
            epsilon: ENTROPY_EPSILON,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.top_k_tokens == 0 || self.top_k_heads == 0 || self.top_k_layers == 0 {
            return Err(AnalysisError::Config("top_k values must be at least 1".into()));
        }
        if !(self.bias_threshold > 0.0 && self.bias_threshold < 1.0) {
            return Err(AnalysisError::Config("bias_threshold must lie in (0, 1)".into()));
        }
        if self.epsilon != ENTROPY_EPSILON {
            return Err(AnalysisError::Config("epsilon is fixed at 1e-9".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub token: String,
    pub position: usize,
    /// Saliency rounded to 3 decimals.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSaliency {
    pub scores: Vec<f64>,
    pub top_tokens: Vec<TopToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFocus {
    pub layer: usize,
    pub head: usize,
    pub avg_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFocus {
    pub layer: usize,
    pub focus_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasWarning {
    pub layer: usize,
    pub head: usize,
    pub token: String,
    pub position: usize,
    pub avg_focus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub saliency: TokenSaliency,
    pub focused_heads: Vec<HeadFocus>,
    pub standout_layers: Vec<LayerFocus>,
    pub bias_warnings: Vec<BiasWarning>,
}

/// Round half away from zero to 3 decimals.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn check_stack(att: &AttentionStack) -> Result<(), AnalysisError> {
    if att.num_layers() == 0 || att.num_heads() == 0 || att.seq_len() == 0 {
        return Err(AnalysisError::Shape("attention stack is empty".into()));
    }
    Ok(())
}

fn check_tokens(att: &AttentionStack, tokens: &[String]) -> Result<(), AnalysisError> {
    check_stack(att)?;
    if tokens.len() != att.seq_len() {
        return Err(AnalysisError::Shape(format!(
            "{} tokens for attention of sequence length {}",
            tokens.len(),
            att.seq_len()
        )));
    }
    Ok(())
}

/// `ln(p + ε)` evaluated as `ln p + ln_1p(ε / p)` so that a probability of
/// exactly one yields `ε - ln_1p(ε) > 0` after adding ε back, instead of a
/// rounding-dominated value of either sign.
fn ln_plus_eps(p: f64) -> f64 {
    if p > 0.0 {
        p.ln() + (ENTROPY_EPSILON / p).ln_1p()
    } else {
        ENTROPY_EPSILON.ln()
    }
}

fn row_entropy(row: &[f64]) -> f64 {
    -row.iter().map(|&p| p * ln_plus_eps(p)).sum::<f64>()
}

/// Mean over query rows of the attention each key position receives.
fn column_means(head: &[f64], n: usize) -> Vec<f64> {
    let mut cols = vec![0.0; n];
    for row in head.chunks(n) {
        for (c, &p) in cols.iter_mut().zip(row) {
            *c += p;
        }
    }
    cols.iter_mut().for_each(|c| *c /= n as f64);
    cols
}

fn head_entropy(head: &[f64], n: usize) -> f64 {
    head.chunks(n).map(row_entropy).sum::<f64>() / n as f64
}

fn top_tokens(scores: &[f64], tokens: &[String], k: usize) -> Vec<TopToken> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|i| TopToken {
            token: tokens[i].clone(),
            position: i,
            score: round3(scores[i]),
        })
        .collect()
}

fn rank_heads(mut heads: Vec<HeadFocus>, k: usize) -> Vec<HeadFocus> {
    heads.sort_by(|a, b| {
        a.avg_entropy
            .total_cmp(&b.avg_entropy)
            .then((a.layer, a.head).cmp(&(b.layer, b.head)))
    });
    heads.truncate(k);
    heads
}

fn rank_layers(mut layers: Vec<LayerFocus>, k: usize) -> Vec<LayerFocus> {
    layers.sort_by(|a, b| {
        b.focus_score
            .total_cmp(&a.focus_score)
            .then(a.layer.cmp(&b.layer))
    });
    layers.truncate(k);
    layers
}

fn bias_for_head(
    att: &AttentionStack,
    tokens: &[String],
    cfg: &AnalysisConfig,
    layer: usize,
    head: usize,
    out: &mut Vec<BiasWarning>,
) {
    let n = att.seq_len();
    for special in &cfg.special_tokens {
        let Some(idx) = tokens.iter().position(|t| t == special) else {
            continue;
        };
        let avg_focus = (0..n).map(|i| att.get(layer, head, i, idx)).sum::<f64>() / n as f64;
        if avg_focus > cfg.bias_threshold {
            out.push(BiasWarning {
                layer,
                head,
                token: special.clone(),
                position: idx,
                avg_focus,
            });
        }
    }
}

pub fn token_saliency(
    att: &AttentionStack,
    tokens: &[String],
    cfg: &AnalysisConfig,
) -> Result<TokenSaliency, AnalysisError> {
    check_tokens(att, tokens)?;
    let n = att.seq_len();
    let mut scores = vec![0.0; n];
    for l in 0..att.num_layers() {
        for h in 0..att.num_heads() {
            for (s, c) in scores.iter_mut().zip(column_means(att.head(l, h), n)) {
                *s += c;
            }
        }
    }
    let denom = (att.num_layers() * att.num_heads()) as f64;
    scores.iter_mut().for_each(|s| *s /= denom);
    let top_tokens = top_tokens(&scores, tokens, cfg.top_k_tokens);
    Ok(TokenSaliency { scores, top_tokens })
}

/// Average row entropy of every head, in (layer, head) order.
pub fn head_entropies(att: &AttentionStack, _cfg: &AnalysisConfig) -> Result<Vec<HeadFocus>, AnalysisError> {
    check_stack(att)?;
    let n = att.seq_len();
    let mut out = Vec::with_capacity(att.num_layers() * att.num_heads());
    for layer in 0..att.num_layers() {
        for head in 0..att.num_heads() {
            out.push(HeadFocus {
                layer,
                head,
                avg_entropy: head_entropy(att.head(layer, head), n),
            });
        }
    }
    Ok(out)
}

/// Mean inverse entropy per layer, in layer order. Every layer must supply
/// the same complete set of heads `0..H`.
pub fn layer_focus_scores(heads: &[HeadFocus], _cfg: &AnalysisConfig) -> Result<Vec<LayerFocus>, AnalysisError> {
    if heads.is_empty() {
        return Err(AnalysisError::Grouping("no heads given".into()));
    }
    let num_layers = heads.iter().map(|h| h.layer).max().unwrap_or(0) + 1;
    let mut per_layer: Vec<Vec<&HeadFocus>> = vec![Vec::new(); num_layers];
    for h in heads {
        per_layer[h.layer].push(h);
    }
    let num_heads = per_layer.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(num_layers);
    for (layer, group) in per_layer.iter_mut().enumerate() {
        group.sort_by_key(|h| h.head);
        let complete = group.len() == num_heads && group.iter().enumerate().all(|(i, h)| h.head == i);
        if !complete {
            return Err(AnalysisError::Grouping(format!(
                "layer {layer} has heads {:?}, expected 0..{num_heads}",
                group.iter().map(|h| h.head).collect::<Vec<_>>()
            )));
        }
        let total: f64 = group.iter().map(|h| 1.0 / (h.avg_entropy + ENTROPY_EPSILON)).sum();
        out.push(LayerFocus {
            layer,
            focus_score: total / num_heads as f64,
        });
    }
    Ok(out)
}

/// Warnings for every head whose mean attention onto the first occurrence
/// of a configured special token exceeds the threshold, in (layer, head,
/// special-token) order.
pub fn special_token_bias(
    att: &AttentionStack,
    tokens: &[String],
    cfg: &AnalysisConfig,
) -> Result<Vec<BiasWarning>, AnalysisError> {
    check_tokens(att, tokens)?;
    let mut out = Vec::new();
    for l in 0..att.num_layers() {
        for h in 0..att.num_heads() {
            bias_for_head(att, tokens, cfg, l, h, &mut out);
        }
    }
    Ok(out)
}

/// Single pass over all heads producing the full summary.
pub fn analyze(
    att: &AttentionStack,
    tokens: &[String],
    cfg: &AnalysisConfig,
) -> Result<AnalysisSummary, AnalysisError> {
    cfg.validate()?;
    check_tokens(att, tokens)?;
    let n = att.seq_len();
    let num_heads = att.num_heads();
    let mut token_scores = vec![0.0; n];
    let mut focused_heads = Vec::with_capacity(att.num_layers() * num_heads);
    let mut layer_scores = Vec::with_capacity(att.num_layers());
    let mut bias_warnings = Vec::new();

    for layer in 0..att.num_layers() {
        let mut total_focus = 0.0;
        for head in 0..num_heads {
            let head_attn = att.head(layer, head);
            for (s, c) in token_scores.iter_mut().zip(column_means(head_attn, n)) {
                *s += c;
            }
            let avg_entropy = head_entropy(head_attn, n);
            focused_heads.push(HeadFocus { layer, head, avg_entropy });
            total_focus += 1.0 / (avg_entropy + ENTROPY_EPSILON);
            bias_for_head(att, tokens, cfg, layer, head, &mut bias_warnings);
        }
        layer_scores.push(LayerFocus {
            layer,
            focus_score: total_focus / num_heads as f64,
        });
    }

    let denom = (att.num_layers() * num_heads) as f64;
    token_scores.iter_mut().for_each(|s| *s /= denom);
    let top = top_tokens(&token_scores, tokens, cfg.top_k_tokens);
    Ok(AnalysisSummary {
        saliency: TokenSaliency {
            scores: token_scores,
            top_tokens: top,
        },
        focused_heads: rank_heads(focused_heads, cfg.top_k_heads),
        standout_layers: rank_layers(layer_scores, cfg.top_k_layers),
        bias_warnings,
    })
}

/// The summary assembled from the four separate operations.
pub fn analyze_composed(
    att: &AttentionStack,
    tokens: &[String],
    cfg: &AnalysisConfig,
) -> Result<AnalysisSummary, AnalysisError> {
    cfg.validate()?;
    let saliency = token_saliency(att, tokens, cfg)?;
    let heads = head_entropies(att, cfg)?;
    let layers = layer_focus_scores(&heads, cfg)?;
    let bias_warnings = special_token_bias(att, tokens, cfg)?;
    Ok(AnalysisSummary {
        saliency,
        focused_heads: rank_heads(heads, cfg.top_k_heads),
        standout_layers: rank_layers(layers, cfg.top_k_layers),
        bias_warnings,
    })
}
