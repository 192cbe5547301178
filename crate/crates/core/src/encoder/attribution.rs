//! Integrated gradients over token embeddings.
//!
//! The baseline replaces every position's token embedding with the `<pad>`
//! embedding; positional embeddings are left untouched along the path.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, EncoderError, ModelParams, Vocabulary, PAD_ID};
use crate::logcore::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub tokens: Vec<String>,
    /// Signed contribution of each token to the target logit.
    pub scores: Vec<f64>,
    pub target: Label,
    pub baseline_logit: f64,
    pub input_logit: f64,
    pub steps: usize,
}

impl TokenAttribution {
    /// `|Σ scores − (input_logit − baseline_logit)|`.
    pub fn completeness_gap(&self) -> f64 {
        (self.scores.iter().sum::<f64>() - (self.input_logit - self.baseline_logit)).abs()
    }
}

/// Attribute the predicted-class logit of `text` to its tokens using a
/// midpoint Riemann sum with `steps` points.
pub fn integrated_gradients(
    text: &str,
    params: &ModelParams,
    vocab: &Vocabulary,
    steps: usize,
) -> Result<TokenAttribution, EncoderError> {
    if text.trim().is_empty() {
        return Err(EncoderError::DegenerateInput);
    }
    let (ids, tokens) = tokenize(text, vocab, params.config.max_seq_len);
    integrated_gradients_ids(&ids, tokens, params, steps)
}

/// Same as [`integrated_gradients`] for an already tokenized sequence.
pub fn integrated_gradients_ids(
    ids: &[usize],
    tokens: Vec<String>,
    params: &ModelParams,
    steps: usize,
) -> Result<TokenAttribution, EncoderError> {
    if steps < 1 {
        return Err(EncoderError::Argument("steps must be at least 1".into()));
    }
    if ids.is_empty() || ids.len() != tokens.len() {
        return Err(EncoderError::Argument("ids and tokens must be non-empty and aligned".into()));
    }
    let input = params.embed(ids);
    let baseline = params.embed(&vec![PAD_ID; ids.len()]);
    let delta = &input - &baseline;

    let input_cache = params.forward::<ChaCha8Rng>(&input, None);
    let target = if input_cache.logits[1] > input_cache.logits[0] { 1 } else { 0 };
    let input_logit = input_cache.logits[target];
    let baseline_logit = params.forward::<ChaCha8Rng>(&baseline, None).logits[target];

    let mut dlogits = [0.0; 2];
    dlogits[target] = 1.0;
    let mut grad_sum = Array2::<f64>::zeros(input.raw_dim());
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = &baseline + &(&delta * alpha);
        let cache = params.forward::<ChaCha8Rng>(&point, None);
        grad_sum += &params.backward(&cache, dlogits, None);
    }
    let avg_grad = grad_sum / steps as f64;
    let scores = (&delta * &avg_grad).rows().into_iter().map(|r| r.sum()).collect();

    Ok(TokenAttribution {
        tokens,
        scores,
        target: Label::from_index(target),
        baseline_logit,
        input_logit,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{build_vocab, EncoderConfig, PAD};
    use rand::SeedableRng;

    fn setup() -> (ModelParams, Vocabulary) {
        let corpus = crate::logcore::generate_synthetic_corpus(10, 10, 1);
        let cfg = EncoderConfig { d_model: 16, d_ff: 32, ..Default::default() };
        let vocab = build_vocab(&corpus, &cfg).unwrap();
        let params = ModelParams::init(&cfg, vocab.len(), &mut ChaCha8Rng::seed_from_u64(2));
        (params, vocab)
    }

    #[test]
    fn baseline_input_gets_zero_scores() {
        let (params, _) = setup();
        let ids = vec![PAD_ID; 4];
        let a = integrated_gradients_ids(&ids, vec![PAD.to_string(); 4], &params, 16).unwrap();
        assert!(a.scores.iter().all(|&s| s == 0.0));
        assert_eq!(a.input_logit, a.baseline_logit);
    }

    #[test]
    fn zero_steps_rejected() {
        let (params, vocab) = setup();
        assert!(matches!(
            integrated_gradients("received block", &params, &vocab, 0),
            Err(EncoderError::Argument(_))
        ));
    }

    #[test]
    fn completeness_on_untrained_model() {
        let (params, vocab) = setup();
        let a = integrated_gradients("received block <BLK> of size <NUM>", &params, &vocab, 128).unwrap();
        assert_eq!(a.scores.len(), a.tokens.len());
        let gap = (a.input_logit - a.baseline_logit).abs();
        assert!(a.completeness_gap() <= 0.02 * gap + 1e-6, "{a:?}");
    }
}
