use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tokenize, EncoderConfig, EncoderError, ModelParams, Vocabulary};
use crate::logcore::{DatasetSplit, Label, LogRecord};

// Independent ChaCha streams for each source of randomness.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 3,
            lr: 3e-4,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_train_loss: f64,
    pub train_loss_per_epoch: Vec<f64>,
    pub val_accuracy_per_epoch: Vec<f64>,
    pub seed: u64,
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        let g_all = grads.tensors();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(g_all);
        for (((p, m), v), g) in tensors {
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * gi;
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Gradient of softmax cross-entropy w.r.t. the two logits, and the loss.
pub fn cross_entropy_grad(logits: [f64; 2], target: usize) -> ([f64; 2], f64) {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    let p = [(logits[0] - lse).exp(), (logits[1] - lse).exp()];
    let mut d = p;
    d[target] -= 1.0;
    (d, lse - logits[target])
}

fn label_of(r: &LogRecord) -> Result<Label, EncoderError> {
    r.label.ok_or(EncoderError::Unlabeled { line: r.line_no })
}

/// Loss and parameter gradient for one record.
fn sample_gradient(
    params: &ModelParams,
    vocab: &Vocabulary,
    record: &LogRecord,
    dropout_stream: Option<u64>,
) -> (ModelParams, f64) {
    let target = record.label.expect("checked labeled").index();
    let (ids, _) = tokenize(&record.normalized_text, vocab, params.config.max_seq_len);
    let embs = params.embed(&ids);
    let cache = match dropout_stream {
        Some(stream) if params.config.dropout > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.config.seed);
            rng.set_stream(stream);
            params.forward(&embs, Some(&mut rng))
        }
        _ => params.forward::<ChaCha8Rng>(&embs, None),
    };
    let (dlogits, loss) = cross_entropy_grad(cache.logits, target);
    let mut grads = params.zeros_like();
    let d_emb = params.backward(&cache, dlogits, Some(&mut grads));
    for (row, &id) in d_emb.outer_iter().zip(&ids) {
        let mut dst = grads.tok_emb.row_mut(id);
        dst += &row;
    }
    (grads, loss)
}

/// Mean loss over `records` and its gradient, with dropout disabled.
/// Exposed for gradient checking.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    vocab: &Vocabulary,
    records: &[LogRecord],
) -> (f64, ModelParams) {
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for r in records {
        let (g, l) = sample_gradient(params, vocab, r, None);
        total.add_assign(&g);
        loss += l;
    }
    let scale = 1.0 / records.len().max(1) as f64;
    for t in total.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= scale);
    }
    (loss * scale, total)
}

fn mean_loss(params: &ModelParams, vocab: &Vocabulary, records: &[LogRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let total: f64 = records
        .par_iter()
        .map(|r| {
            let (ids, _) = tokenize(&r.normalized_text, vocab, params.config.max_seq_len);
            let cache = params.forward::<ChaCha8Rng>(&params.embed(&ids), None);
            cross_entropy_grad(cache.logits, r.label.expect("checked labeled").index()).1
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / records.len() as f64
}

/// Fraction of `records` whose label the model predicts correctly.
pub fn evaluate_accuracy(params: &ModelParams, vocab: &Vocabulary, records: &[LogRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let correct = records
        .par_iter()
        .filter(|r| {
            let (ids, _) = tokenize(&r.normalized_text, vocab, params.config.max_seq_len);
            let logits = params.forward::<ChaCha8Rng>(&params.embed(&ids), None).logits;
            let pred = if logits[1] > logits[0] { Label::Anomaly } else { Label::Normal };
            Some(pred) == r.label
        })
        .count();
    correct as f64 / records.len() as f64
}

/// Train a fresh classifier on `split.train`, reporting validation accuracy
/// after each epoch. All randomness derives from `config.seed`.
pub fn train(
    split: &DatasetSplit,
    vocab: &Vocabulary,
    config: &EncoderConfig,
    options: TrainOptions,
) -> Result<(ModelParams, TrainReport), EncoderError> {
    config.validate()?;
    if options.batch == 0 {
        return Err(EncoderError::Argument("batch size must be at least 1".into()));
    }
    if !(options.lr.is_finite() && options.lr > 0.0) {
        return Err(EncoderError::Argument("learning rate must be positive".into()));
    }
    for r in split.train.iter().chain(&split.val) {
        label_of(r)?;
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(STREAM_INIT);
    let mut params = ModelParams::init(config, vocab.len(), &mut init_rng);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut adam = Adam::new(&params);

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut step = 0usize;
    let mut sample_counter = 0u64;
    let mut train_loss_per_epoch = Vec::with_capacity(options.epochs);
    let mut val_accuracy_per_epoch = Vec::with_capacity(options.epochs);

    for _epoch in 0..options.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(options.batch) {
            step += 1;
            let base = sample_counter;
            sample_counter += chunk.len() as u64;
            let results: Vec<(ModelParams, f64)> = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &idx)| {
                    sample_gradient(&params, vocab, &split.train[idx], Some(STREAM_DROPOUT_BASE + base + j as u64))
                })
                .collect();
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for (g, l) in &results {
                grads.add_assign(g);
                loss += l;
            }
            loss /= chunk.len() as f64;
            if !loss.is_finite() {
                return Err(EncoderError::Diverged { step, loss });
            }
            let scale = 1.0 / chunk.len() as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grads, options.lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        let n = split.train.len().max(1) as f64;
        train_loss_per_epoch.push(epoch_loss / n);
        val_accuracy_per_epoch.push(evaluate_accuracy(&params, vocab, &split.val));
    }

    let final_train_loss = match train_loss_per_epoch.last() {
        Some(&l) => l,
        None => mean_loss(&params, vocab, &split.train),
    };
    Ok((
        params,
        TrainReport {
            epochs: options.epochs,
            final_train_loss,
            train_loss_per_epoch,
            val_accuracy_per_epoch,
            seed: config.seed,
        },
    ))
}

/// Parameters `train` starts from for this config and vocabulary size.
pub(crate) fn initial_params(config: &EncoderConfig, vocab_size: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_INIT);
    ModelParams::init(config, vocab_size, &mut rng)
}
