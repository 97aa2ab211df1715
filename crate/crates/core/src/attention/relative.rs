use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{causal_mask, check_qkv, AttentionConfig, AttentionError, Result};
use crate::tensor::{Element, Tensor, GATHER_FILL};

/// Learned per-distance key embeddings shared by all heads of a layer.
///
/// Row `max_len - 1 - d` holds the embedding for distance `d = i - j`, so the
/// last `n` rows serve a sequence of length `n` with the zero-distance slot
/// last.
#[derive(Debug, Clone)]
pub struct RelativeEmbeddings<T: Element> {
    pub table: Tensor<T>,
    pub max_len: usize,
}

impl<T: Element> RelativeEmbeddings<T> {
    pub fn new(table: Tensor<T>) -> Result<Self> {
        if table.rank() != 2 {
            return Err(AttentionError::Precondition(format!(
                "relative table must be [max_len, head_dim], got {:?}",
                table.shape()
            )));
        }
        let max_len = table.shape()[0];
        Ok(Self { table, max_len })
    }

    /// Embeddings for distances `n-1, ..., 0` as `[n, head_dim]`.
    fn window(&self, n: usize) -> Result<Tensor<T>> {
        if n > self.max_len {
            return Err(AttentionError::Capacity {
                n,
                max_len: self.max_len,
            });
        }
        Ok(self.table.narrow(0, self.max_len - n, n)?)
    }
}

/// Realigns per-distance logits `[h, n, n]` (column `r` = distance `n-1-r`)
/// to per-pair logits: `out[h, i, j] = rel[h, i, (n-1) - (i-j)]` for `j <= i`.
///
/// Done by left-padding one zero column, reading the buffer back as
/// `[n+1, n]` and dropping the first row. Entries above the diagonal hold
/// leftovers and must be masked by the caller.
pub fn skew<T: Element>(rel_logits: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = rel_logits.shape();
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(AttentionError::Precondition(format!(
            "skew expects [h, n, n], got {shape:?}"
        )));
    }
    let (h, n) = (shape[0], shape[1]);
    let mut idx = Vec::with_capacity(h * n * (n + 1));
    for hh in 0..h {
        for i in 0..n {
            idx.push(GATHER_FILL);
            for c in 0..n {
                idx.push(((hh * n + i) * n + c) as u32);
            }
        }
    }
    let padded = rel_logits.gather_rows(1, Arc::from(idx), &[h, n, n + 1])?;
    let folded = padded.reshape(&[h, n + 1, n])?;
    Ok(folded.narrow(1, 1, n)?)
}

/// `softmax((q·kᵀ + skew(q·E_relᵀ)) / sqrt(s) + causal) · v`.
pub fn relative_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    rel: &RelativeEmbeddings<T>,
    config: &AttentionConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<T>> {
    let (_, n, s) = check_qkv(q, k, v)?;
    let e = rel.window(n)?;
    if e.shape()[1] != s {
        return Err(AttentionError::Precondition(format!(
            "relative table width {} != head_dim {s}",
            e.shape()[1]
        )));
    }
    let content = q.matmul_nt(k)?;
    let position = skew(&q.matmul_nt(&e)?)?;
    let scores = content.add(&position)?.scale(1.0 / (s as f64).sqrt());
    let mut probs = scores.masked_softmax(&causal_mask(n))?.probs;
    if let Some(rng) = rng {
        probs = probs.dropout(config.dropout_p, rng);
    }
    Ok(probs.matmul(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{dense_causal_attention, AttentionMode};
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    #[test]
    fn skew_single_position() {
        let r = Tensor::<f64>::from_f64(&[2.5], &[1, 1, 1]).unwrap();
        assert_eq!(skew(&r).unwrap().data(), &[2.5]);
    }

    #[test]
    fn skew_two_positions() {
        // columns: slot 0 = distance 1, slot 1 = distance 0
        let r = Tensor::<f64>::from_f64(&[10.0, 11.0, 20.0, 21.0], &[1, 2, 2]).unwrap();
        let s = skew(&r).unwrap();
        assert_eq!(s.data()[0], 11.0); // (0,0): distance 0
        assert_eq!(s.data()[3], 21.0); // (1,1): offset-0 slot
        assert_eq!(s.data()[2], 20.0); // (1,0): offset-1 slot
    }

    #[test]
    fn skew_matches_double_loop() {
        let (h, n, s, max_len) = (2, 8, 3, 10);
        let q = random(&[h, n, s], 5);
        let table = random(&[max_len, s], 6);
        let rel = RelativeEmbeddings::new(table.clone()).unwrap();
        let skewed = skew(&q.matmul_nt(&rel.window(n).unwrap()).unwrap()).unwrap();
        for hh in 0..h {
            for i in 0..n {
                for j in 0..=i {
                    let row = max_len - 1 - (i - j);
                    let expect: f64 = (0..s)
                        .map(|d| q.data()[(hh * n + i) * s + d] * table.data()[row * s + d])
                        .sum();
                    let got = skewed.data()[(hh * n + i) * n + j];
                    assert!((got - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_table_reduces_to_dense() {
        let (h, n, s) = (2, 6, 4);
        let (q, k, v) = (random(&[h, n, s], 1), random(&[h, n, s], 2), random(&[h, n, s], 3));
        let rel = RelativeEmbeddings::new(Tensor::zeros(&[n, s])).unwrap();
        let cfg = AttentionConfig::new(AttentionMode::Relative, h, s);
        let a = relative_attention(&q, &k, &v, &rel, &cfg, None).unwrap();
        let dense_cfg = AttentionConfig::new(AttentionMode::DenseCausal, h, s);
        let b = dense_causal_attention(&q, &k, &v, &dense_cfg, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn single_position_returns_value_row() {
        let (q, k, v) = (random(&[1, 1, 4], 1), random(&[1, 1, 4], 2), random(&[1, 1, 4], 3));
        let rel = RelativeEmbeddings::new(random(&[4, 4], 4)).unwrap();
        let cfg = AttentionConfig::new(AttentionMode::Relative, 1, 4);
        let out = relative_attention(&q, &k, &v, &rel, &cfg, None).unwrap();
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn sequence_longer_than_table_is_a_capacity_error() {
        let x = random(&[1, 5, 2], 1);
        let rel = RelativeEmbeddings::new(random(&[4, 2], 2)).unwrap();
        let cfg = AttentionConfig::new(AttentionMode::Relative, 1, 2);
        assert_eq!(
            relative_attention(&x, &x, &x, &rel, &cfg, None).unwrap_err(),
            AttentionError::Capacity { n: 5, max_len: 4 }
        );
    }
}
