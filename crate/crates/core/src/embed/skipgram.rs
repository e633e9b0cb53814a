//! Skip-gram with negative sampling, trained by plain SGD in binary64.
//!
//! For a center token `c`, an observed context `o` and sampled negatives
//! `n_1..n_k` the per-pair loss is
//!
//! ```text
//! L = -ln σ(u_o · v_c) - Σ_j ln σ(-u_{n_j} · v_c)
//! ```
//!
//! where `v` are center (input) vectors and `u` context (output) vectors.
//! Negatives are drawn from the unigram distribution raised to 0.75 through a
//! fixed table of 1e6 slots. The learning rate decays linearly from
//! `learning_rate` to `min_learning_rate` over all training positions.
//!
//! Training is single-threaded and fully determined by the seed.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, UNK};
use crate::pylex::TokenStream;

pub const NEGATIVE_TABLE_SIZE: usize = 1_000_000;
const UNIGRAM_POWER: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SkipgramError {
    #[error("degenerate corpus: {0} distinct tokens after min-count filtering (need at least 2)")]
    DegenerateCorpus(usize),
    #[error("invalid skip-gram config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for SgConfig {
    fn default() -> Self {
        SgConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            min_count: 2,
            seed: 1,
        }
    }
}

impl SgConfig {
    pub fn validate(&self) -> Result<(), SkipgramError> {
        let bad = |m: &str| Err(SkipgramError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be > 0");
        }
        if self.window == 0 {
            return bad("window must be > 0");
        }
        if self.negatives == 0 {
            return bad("negatives must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be > 0");
        }
        if !(self.learning_rate > 0.0 && self.min_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be > 0");
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln σ(x)` without overflow for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss of one (center, context, negatives) pair and its gradient with
/// respect to every vector involved. Gradients are written into the
/// provided buffers (overwritten, not accumulated).
pub fn pair_loss_grad(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
    d_center: &mut [f64],
    d_context: &mut [f64],
    d_negatives: &mut [Vec<f64>],
) -> f64 {
    let s = dot(context, center);
    let mut loss = -log_sigmoid(s);
    // dL/ds = σ(s) - 1
    let g = sigmoid(s) - 1.0;
    for i in 0..center.len() {
        d_center[i] = g * context[i];
        d_context[i] = g * center[i];
    }
    for (neg, d_neg) in negatives.iter().zip(d_negatives.iter_mut()) {
        let s = dot(neg, center);
        loss -= log_sigmoid(-s);
        // d/ds [-ln σ(-s)] = σ(s)
        let g = sigmoid(s);
        for i in 0..center.len() {
            d_center[i] += g * neg[i];
            d_neg[i] = g * center[i];
        }
    }
    loss
}

/// Loss only; used by gradient checks.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let mut loss = -log_sigmoid(dot(context, center));
    for neg in negatives {
        loss -= log_sigmoid(-dot(neg, center));
    }
    loss
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

fn build_vocab(corpus: &[TokenStream], min_count: u64) -> Vocab {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for stream in corpus {
        for t in &stream.tokens {
            *freq.entry(t.text.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = Vec::new();
    let mut unk = 0u64;
    for (w, c) in freq {
        if c >= min_count && w != UNK {
            kept.push((w, c));
        } else {
            unk += c;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut words = vec![UNK.to_string()];
    let mut counts = vec![unk];
    for (w, c) in kept {
        words.push(w.to_string());
        counts.push(c);
    }
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Vocab { words, counts, index }
}

/// Unigram^0.75 sampling table: slot `s` holds the word whose cumulative
/// probability interval contains `(s + 0.5) / size`.
fn negative_table(counts: &[u64]) -> Vec<u32> {
    let weight = |c: u64| (c as f64).powf(UNIGRAM_POWER);
    let total: f64 = counts.iter().map(|&c| weight(c)).sum();
    let mut table = Vec::with_capacity(NEGATIVE_TABLE_SIZE);
    let mut word = 0usize;
    let mut cum = weight(counts[0]) / total;
    for slot in 0..NEGATIVE_TABLE_SIZE {
        let frac = (slot as f64 + 0.5) / NEGATIVE_TABLE_SIZE as f64;
        while frac > cum && word + 1 < counts.len() {
            word += 1;
            cum += weight(counts[word]) / total;
        }
        table.push(word as u32);
    }
    table
}

pub fn train_skipgram(corpus: &[TokenStream], config: &SgConfig) -> Result<EmbeddingTable, SkipgramError> {
    config.validate()?;
    let vocab = build_vocab(corpus, config.min_count);
    let real_words = vocab.words.len() - 1;
    if real_words < 2 {
        return Err(SkipgramError::DegenerateCorpus(real_words));
    }
    let dim = config.dim;
    let n = vocab.words.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut input: Vec<f64> = (0..n * dim).map(|_| (rng.gen::<f64>() - 0.5) / dim as f64).collect();
    let mut output = vec![0.0f64; n * dim];
    let table = negative_table(&vocab.counts);

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| vocab.index.get(t.text.as_str()).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    let positions: usize = sentences.iter().map(Vec::len).sum();
    let total = (positions * config.epochs).max(1) as f64;

    let k = config.negatives;
    let mut center = vec![0.0; dim];
    let mut context = vec![0.0; dim];
    let mut neg_rows: Vec<Vec<f64>> = vec![vec![0.0; dim]; k];
    let mut neg_ids: Vec<usize> = Vec::with_capacity(k);
    let mut d_center = vec![0.0; dim];
    let mut d_context = vec![0.0; dim];
    let mut d_negs: Vec<Vec<f64>> = vec![vec![0.0; dim]; k];

    let mut processed = 0usize;
    for _epoch in 0..config.epochs {
        for sent in &sentences {
            for (i, &c) in sent.iter().enumerate() {
                let lr = (config.learning_rate
                    - (config.learning_rate - config.min_learning_rate) * processed as f64 / total)
                    .max(config.min_learning_rate);
                processed += 1;
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(sent.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let o = sent[j];
                    neg_ids.clear();
                    for _ in 0..k {
                        let cand = table[rng.gen_range(0..NEGATIVE_TABLE_SIZE)] as usize;
                        if cand != o {
                            neg_ids.push(cand);
                        }
                    }
                    center.copy_from_slice(&input[c * dim..(c + 1) * dim]);
                    context.copy_from_slice(&output[o * dim..(o + 1) * dim]);
                    for (row, &id) in neg_rows.iter_mut().zip(&neg_ids) {
                        row.copy_from_slice(&output[id * dim..(id + 1) * dim]);
                    }
                    let negs: Vec<&[f64]> = neg_rows[..neg_ids.len()].iter().map(Vec::as_slice).collect();
                    pair_loss_grad(
                        &center,
                        &context,
                        &negs,
                        &mut d_center,
                        &mut d_context,
                        &mut d_negs[..neg_ids.len()],
                    );

                    for (x, g) in output[o * dim..(o + 1) * dim].iter_mut().zip(&d_context) {
                        *x -= lr * g;
                    }
                    for (&id, g) in neg_ids.iter().zip(&d_negs) {
                        for (x, gi) in output[id * dim..(id + 1) * dim].iter_mut().zip(g) {
                            *x -= lr * gi;
                        }
                    }
                    for (x, g) in input[c * dim..(c + 1) * dim].iter_mut().zip(&d_center) {
                        *x -= lr * g;
                    }
                }
            }
        }
    }
    debug_assert!(input.iter().all(|v| v.is_finite()));
    Ok(EmbeddingTable::new(dim, vocab.words, vocab.counts, input, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pylex::tokenize_str;

    #[test]
    fn single_repeated_token_is_degenerate() {
        let corpus = vec![tokenize_str("x x x x x x")];
        let err = train_skipgram(&corpus, &SgConfig::default()).unwrap_err();
        assert_eq!(err, SkipgramError::DegenerateCorpus(1));
    }

    #[test]
    fn rare_tokens_fold_into_unk() {
        let corpus = vec![tokenize_str("a b a b c")];
        let cfg = SgConfig {
            dim: 4,
            epochs: 1,
            ..SgConfig::default()
        };
        let t = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(t.words, vec![UNK, "a", "b"]);
        assert_eq!(t.counts, vec![1, 2, 2]);
        assert_eq!(t.lookup("c"), 0);
    }

    #[test]
    fn negative_table_follows_smoothed_unigram() {
        let counts = [0u64, 16, 1];
        let table = negative_table(&counts);
        let ones = table.iter().filter(|&&w| w == 1).count() as f64 / NEGATIVE_TABLE_SIZE as f64;
        let expect = 8.0 / 9.0; // 16^0.75 = 8, 1^0.75 = 1
        assert!((ones - expect).abs() < 1e-3, "{ones}");
        assert!(!table.contains(&0));
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let c = SgConfig {
            negatives: 0,
            ..SgConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(SgConfig::default().validate().is_ok());
    }
}
