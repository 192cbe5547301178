//! Backpropagation against central finite differences.

#![allow(dead_code)]

use logsight_core::encoder::{batch_loss_and_grad, build_vocab, EncoderConfig, ModelParams};
use logsight_core::logcore::{Label, LogRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const H: f64 = 1e-4;

pub fn tiny_config(layers: usize, heads: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: layers,
        num_heads: heads,
        d_model: 8,
        d_ff: 16,
        max_seq_len: 8,
        vocab_max: 16,
        dropout: 0.0,
        seed: 11,
    }
}

/// Parameters with O(1) entries so every nonlinearity is exercised.
fn scrambled(cfg: &EncoderConfig, vocab_size: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(cfg, vocab_size, &mut rng);
    let normal = Normal::new(0.0, 0.5).unwrap();
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    p
}

/// Flat indices of parameters that can influence the loss for this input.
fn active_indices(params: &ModelParams, used_tokens: &[usize], seq_len: usize) -> Vec<usize> {
    let d = params.config.d_model;
    let mut out = Vec::new();
    let mut offset = 0;
    for t in params.tensors() {
        for i in 0..t.data.len() {
            let row = i / d;
            let keep = match t.name.as_str() {
                "tok_emb" => used_tokens.contains(&row),
                "pos_emb" => row < seq_len,
                _ => true,
            };
            if keep {
                out.push(offset + i);
            }
        }
        offset += t.data.len();
    }
    out
}

fn flat_get(params: &ModelParams, idx: usize) -> f64 {
    let mut offset = 0;
    for t in params.tensors() {
        if idx < offset + t.data.len() {
            return t.data[idx - offset];
        }
        offset += t.data.len();
    }
    panic!("index out of range")
}

fn flat_set(params: &mut ModelParams, idx: usize, value: f64) {
    let mut offset = 0;
    for t in params.tensors_mut() {
        if idx < offset + t.len() {
            t[idx - offset] = value;
            return;
        }
        offset += t.len();
    }
    panic!("index out of range")
}

/// Worst relative error over `samples` random parameters, or the first
/// parameter whose error reaches `1e-5`.
pub fn check(cfg: EncoderConfig, text: &str, label: Label, samples: usize, seed: u64) -> Result<f64, String> {
    let record = LogRecord::new(1, text, Some(label));
    let vocab = build_vocab(std::slice::from_ref(&record), &cfg).unwrap();
    let params = scrambled(&cfg, vocab.len(), seed);
    let records = [record];
    let (_, analytic) = batch_loss_and_grad(&params, &vocab, &records);

    let n_words = text.split_whitespace().count();
    let used: Vec<usize> = vec![0, 1].into_iter().chain(4..4 + n_words).collect();
    // Key biases have exactly zero gradient (softmax is shift invariant);
    // relative error is meaningless there, so sample from the rest.
    let active: Vec<usize> = active_indices(&params, &used, n_words + 2)
        .into_iter()
        .filter(|&i| flat_get(&analytic, i).abs() > 1e-8)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let idx = active[rng.random_range(0..active.len())];
        let orig = flat_get(&params, idx);
        let mut p = params.clone();
        flat_set(&mut p, idx, orig + H);
        let up = batch_loss_and_grad(&p, &vocab, &records).0;
        flat_set(&mut p, idx, orig - H);
        let down = batch_loss_and_grad(&p, &vocab, &records).0;
        let numeric = (up - down) / (2.0 * H);
        let a = flat_get(&analytic, idx);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
        if rel >= 1e-5 {
            return Err(format!("param {idx}: analytic {a:e} numeric {numeric:e} rel {rel:e}"));
        }
    }
    Ok(worst)
}

