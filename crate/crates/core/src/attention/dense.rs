use rand_chacha::ChaCha8Rng;

use super::{causal_mask, check_qkv, AttentionConfig, Result};
use crate::tensor::{Element, Tensor};

/// `softmax(q·kᵀ / sqrt(s) | mask) · v` with an arbitrary `[n, n]` 0/1 mask
/// shared by all heads.
pub fn masked_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &Tensor<T>,
    dropout_p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<T>> {
    let (_, _, s) = check_qkv(q, k, v)?;
    let scores = q.matmul_nt(k)?.scale(1.0 / (s as f64).sqrt());
    let mut probs = scores.masked_softmax(mask)?.probs;
    if let Some(rng) = rng {
        probs = probs.dropout(dropout_p, rng);
    }
    Ok(probs.matmul(v)?)
}

/// Full `n x n` attention where position `i` sees every `j <= i`.
pub fn dense_causal_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    config: &AttentionConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<T>> {
    let (_, n, _) = check_qkv(q, k, v)?;
    let mask = if config.causal {
        causal_mask(n)
    } else {
        Tensor::full(&[n, n], T::one())
    };
    masked_attention(q, k, v, &mask, config.dropout_p, rng)
}
