//! Autoregressive sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::midi::EventVocab;
use crate::model::{Model, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Categorical,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Defaults to `[BOS]` when empty.
    pub primer: Vec<usize>,
    pub target_length: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            primer: Vec::new(),
            target_length: 512,
            seed: 0,
            strategy: Strategy::Categorical,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("sampling config: {0}")]
    Config(String),
    #[error("{what} of length {n} exceeds the model's max_len {max_len}")]
    Capacity { what: &'static str, n: usize, max_len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Next-token probabilities after `prefix` at `temperature`, with PAD and
/// BOS excluded.
pub fn next_token_distribution(model: &Model<f32>, prefix: &[usize], temperature: f64) -> Result<Vec<f64>, GenerationError> {
    let logits = model.forward(prefix, None)?;
    let v = model.vocab_size();
    let last = &logits.data()[(prefix.len() - 1) * v..];
    Ok(softmax_excluding(last, temperature, &excluded(v)))
}

fn excluded(vocab_size: usize) -> Vec<usize> {
    let vocab = EventVocab;
    [vocab.pad(), vocab.bos()].into_iter().filter(|&t| t < vocab_size).collect()
}

fn softmax_excluding(logits: &[f32], temperature: f64, excluded: &[usize]) -> Vec<f64> {
    let scaled: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if excluded.contains(&i) {
                f64::NEG_INFINITY
            } else {
                f64::from(l) / temperature
            }
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Extends the primer one token at a time until `target_length` tokens.
pub fn sample(model: &Model<f32>, cfg: &SamplerConfig) -> Result<Vec<usize>, GenerationError> {
    if !(cfg.temperature > 0.0) {
        return Err(GenerationError::Config(format!("temperature must be positive, got {}", cfg.temperature)));
    }
    let mut tokens = if cfg.primer.is_empty() {
        vec![EventVocab.bos()]
    } else {
        cfg.primer.clone()
    };
    if let Some(max_len) = model.spec().max_len() {
        if tokens.len() > max_len {
            return Err(GenerationError::Capacity {
                what: "primer",
                n: tokens.len(),
                max_len,
            });
        }
        if cfg.target_length > max_len {
            return Err(GenerationError::Capacity {
                what: "target_length",
                n: cfg.target_length,
                max_len,
            });
        }
    }
    if cfg.target_length < tokens.len() {
        return Err(GenerationError::Config(format!(
            "target_length {} shorter than primer ({})",
            cfg.target_length,
            tokens.len()
        )));
    }
    let model = model.frozen();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while tokens.len() < cfg.target_length {
        let p = next_token_distribution(&model, &tokens, cfg.temperature)?;
        let next = match cfg.strategy {
            Strategy::Greedy => argmax(&p),
            Strategy::Categorical => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                p.iter()
                    .position(|&q| {
                        acc += q;
                        u < acc
                    })
                    .unwrap_or_else(|| argmax(&p))
            }
        };
        tokens.push(next);
    }
    Ok(tokens)
}
