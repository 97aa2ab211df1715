//! Attention kernels over per-head tensors of shape `[heads, n, head_dim]`.
//!
//! Three modes share one entry point, [`attend`]:
//! * dense causal attention over the full `n x n` score matrix,
//! * relative self-attention with a learned per-distance embedding table,
//!   aligned to `(i, j)` pairs by [`skew`],
//! * sliding-window attention computed on overlapping chunks in `O(n * w)`.

mod config;
mod dense;
mod mask;
mod relative;
mod sliding;

pub use config::{AttentionConfig, AttentionMode};
pub use dense::{dense_causal_attention, masked_attention};
pub use mask::{band_mask_oracle, causal_mask};
pub use relative::{relative_attention, skew, RelativeEmbeddings};
pub use sliding::{chunk_overlapping, chunked_band_attention, padded_length, sliding_window_attention};

use rand_chacha::ChaCha8Rng;

use crate::tensor::{Element, Tensor, TensorError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("attention over an empty sequence")]
    EmptyInput,
    #[error("sequence length {n} exceeds relative embedding capacity {max_len}")]
    Capacity { n: usize, max_len: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid attention config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, AttentionError>;

/// How a kernel call was actually executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionStatus {
    Dense,
    Relative,
    Windowed,
    /// The window covers the whole sequence; computed densely under the
    /// equivalent band mask.
    DenseFallback,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput<T: Element> {
    pub output: Tensor<T>,
    pub status: AttentionStatus,
}

/// Dispatches on `config.mode`. `rng` enables attention dropout.
pub fn attend<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    config: &AttentionConfig,
    relative: Option<&RelativeEmbeddings<T>>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<AttentionOutput<T>> {
    match config.mode {
        AttentionMode::DenseCausal => Ok(AttentionOutput {
            output: dense_causal_attention(q, k, v, config, rng)?,
            status: AttentionStatus::Dense,
        }),
        AttentionMode::Relative => {
            let rel = relative.ok_or_else(|| {
                AttentionError::InvalidConfig("relative mode requires relative embeddings".into())
            })?;
            Ok(AttentionOutput {
                output: relative_attention(q, k, v, rel, config, rng)?,
                status: AttentionStatus::Relative,
            })
        }
        AttentionMode::SlidingWindow => sliding_window_attention(q, k, v, config, rng),
    }
}

/// Checks `q`, `k`, `v` are `[h, n, s]` with identical shapes and `n > 0`.
pub(crate) fn check_qkv<T: Element>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if q.rank() != 3 {
        return Err(AttentionError::Precondition(format!(
            "expected [heads, n, head_dim], got {:?}",
            q.shape()
        )));
    }
    for other in [k, v] {
        if other.shape() != q.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                lhs: q.shape().to_vec(),
                rhs: other.shape().to_vec(),
            }
            .into());
        }
    }
    let (h, n, s) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    if n == 0 {
        return Err(AttentionError::EmptyInput);
    }
    Ok((h, n, s))
}

/// Multiply-accumulates of the score and value products for one call,
/// derived from tensor shapes alone.
pub fn attention_macs(mode: AttentionMode, n: usize, heads: usize, head_dim: usize, window: usize) -> u64 {
    let (n, h, s) = (n as u64, heads as u64, head_dim as u64);
    match mode {
        AttentionMode::DenseCausal => 2 * h * n * n * s,
        // q·kᵀ, q·E_relᵀ and p·v
        AttentionMode::Relative => 3 * h * n * n * s,
        AttentionMode::SlidingWindow => {
            let w = window as u64;
            if w >= 2 * n {
                return 2 * h * n * n * s;
            }
            let padded = padded_length(n as usize, window) as u64;
            let chunks = padded / (w / 2) - 1;
            // chunked q·kᵀ and p·v, each chunks x (w x w x s)
            2 * h * chunks * w * w * s
        }
    }
}
