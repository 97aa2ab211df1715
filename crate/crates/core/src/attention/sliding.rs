//! Sliding-window attention on overlapping chunks.
//!
//! With `w` the window and `ow = w / 2` the one-sided window, the (padded)
//! sequence is cut into chunks of `w` rows that overlap by `ow`. Every
//! admissible pair `(i, j)` with `|i - j| <= ow` lies inside at least one
//! chunk; [`chunk_for`] picks exactly one. Scores are computed chunk by
//! chunk, moved into a `[n, 2*ow + 1]` band (one column per offset) where
//! masking and softmax happen, and moved back into chunk layout to be
//! multiplied with the chunked values. Overlapping output rows are summed.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::mask::band_allows;
use super::{
    band_mask_oracle, check_qkv, masked_attention, AttentionConfig, AttentionError, AttentionMode, AttentionOutput,
    AttentionStatus, Result,
};
use crate::tensor::{Element, Tensor, GATHER_FILL};

/// Length the chunked path pads to: the next multiple of `w / 2`, and at
/// least one full chunk.
pub fn padded_length(n: usize, w: usize) -> usize {
    let ow = w / 2;
    (n.div_ceil(ow) * ow).max(w)
}

/// Splits `[h, n, s]` into `[h, n/(w/2) - 1, w, s]`; chunk `c` covers rows
/// `c*w/2 .. c*w/2 + w`.
pub fn chunk_overlapping<T: Element>(x: &Tensor<T>, w: usize) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(AttentionError::Precondition(format!(
            "chunking expects [h, n, s], got {:?}",
            x.shape()
        )));
    }
    if w < 2 || w % 2 != 0 {
        return Err(AttentionError::Precondition(format!("window {w} must be even and >= 2")));
    }
    let (h, n, s) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ow = w / 2;
    if n % ow != 0 || n < w {
        return Err(AttentionError::Precondition(format!(
            "sequence length {n} must be a multiple of {ow} and at least {w}; pad upstream"
        )));
    }
    let chunks = n / ow - 1;
    let mut idx = Vec::with_capacity(h * chunks * w);
    for hh in 0..h {
        for c in 0..chunks {
            for a in 0..w {
                idx.push((hh * n + c * ow + a) as u32);
            }
        }
    }
    Ok(x.gather_rows(s, Arc::from(idx), &[h, chunks, w, s])?)
}

/// The chunk that owns the pair `(i, i + offset)`.
fn chunk_for(i: usize, offset: isize, ow: usize, chunks: usize) -> usize {
    let block = i / ow;
    if offset < 0 {
        block.saturating_sub(1)
    } else {
        block.min(chunks - 1)
    }
}

/// Right-pads `[h, n, s]` with zero rows to `[h, padded, s]`.
fn pad_rows<T: Element>(x: &Tensor<T>, padded: usize) -> Result<Tensor<T>> {
    let (h, n, s) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if padded == n {
        return Ok(x.clone());
    }
    let mut idx = Vec::with_capacity(h * padded);
    for hh in 0..h {
        for i in 0..padded {
            idx.push(if i < n { (hh * n + i) as u32 } else { GATHER_FILL });
        }
    }
    Ok(x.gather_rows(s, Arc::from(idx), &[h, padded, s])?)
}

/// Local attention where position `i` sees `j` iff `band_mask_oracle` allows
/// it. Sequences are padded to a multiple of `w / 2` internally and the pad
/// positions are masked out; the output has the input's length.
pub fn sliding_window_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    config: &AttentionConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<AttentionOutput<T>> {
    if config.mode != AttentionMode::SlidingWindow {
        return Err(AttentionError::Precondition(format!(
            "sliding_window_attention called with mode {}",
            config.mode
        )));
    }
    config.validate()?;
    let (_, n, _) = check_qkv(q, k, v)?;
    let (w, dilation, causal) = (config.attention_window, config.dilation, config.causal);
    if w >= 2 * n {
        log::warn!("attention window {w} covers sequence of length {n}; using dense band attention");
        let mask = band_mask_oracle(n, w, dilation, causal);
        return Ok(AttentionOutput {
            output: masked_attention(q, k, v, &mask, config.dropout_p, rng)?,
            status: AttentionStatus::DenseFallback,
        });
    }

    Ok(AttentionOutput {
        output: chunked_band_attention(q, k, v, config, rng)?,
        status: AttentionStatus::Windowed,
    })
}

/// The chunked path without the dense fallback; valid for any `n >= 1`
/// (short sequences are padded to one full chunk).
pub fn chunked_band_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    config: &AttentionConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<T>> {
    config.validate()?;
    let (h, n, s) = check_qkv(q, k, v)?;
    let (w, dilation, causal) = (config.attention_window, config.dilation, config.causal);
    let ow = config.one_sided_window();
    let np = padded_length(n, w);
    let chunks = np / ow - 1;
    let band_width = 2 * ow + 1;

    let q = pad_rows(&q.scale(1.0 / (s as f64).sqrt()), np)?;
    let k = pad_rows(k, np)?;
    let v = pad_rows(v, np)?;

    // chunk-local scores: [h, chunks, w, w]
    let scores = chunk_overlapping(&q, w)?.matmul_nt(&chunk_overlapping(&k, w)?)?;

    // gather into the band layout, masking out-of-band, future and padded pairs
    let allowed = |i: usize, j: isize| j >= 0 && (j as usize) < n && i < n && band_allows(i, j as usize, ow, dilation, causal);
    let mut mask = vec![T::zero(); np * band_width];
    let mut band_idx = vec![GATHER_FILL; h * np * band_width];
    for i in 0..np {
        for t in 0..band_width {
            let offset = t as isize - ow as isize;
            let j = i as isize + offset;
            if !allowed(i, j) {
                continue;
            }
            mask[i * band_width + t] = T::one();
            let c = chunk_for(i, offset, ow, chunks);
            let (a, b) = (i - c * ow, j as usize - c * ow);
            for hh in 0..h {
                band_idx[(hh * np + i) * band_width + t] = (((hh * chunks + c) * w + a) * w + b) as u32;
            }
        }
    }
    let band = scores.gather_rows(1, Arc::from(band_idx), &[h, np, band_width])?;
    let mask = Tensor::from_vec(mask, &[np, band_width])?;
    let mut probs = band.masked_softmax(&mask)?.probs;
    if let Some(rng) = rng {
        probs = probs.dropout(config.dropout_p, rng);
    }

    // back to chunk layout, each pair in exactly the chunk that scored it
    let mut chunk_idx = vec![GATHER_FILL; h * chunks * w * w];
    for c in 0..chunks {
        for a in 0..w {
            let i = c * ow + a;
            for b in 0..w {
                let j = (c * ow + b) as isize;
                let offset = j - i as isize;
                if offset.unsigned_abs() > ow || !allowed(i, j) || chunk_for(i, offset, ow, chunks) != c {
                    continue;
                }
                let t = (offset + ow as isize) as usize;
                for hh in 0..h {
                    chunk_idx[((hh * chunks + c) * w + a) * w + b] = ((hh * np + i) * band_width + t) as u32;
                }
            }
        }
    }
    let chunk_probs = probs.gather_rows(1, Arc::from(chunk_idx), &[h, chunks, w, w])?;
    let chunk_out = chunk_probs.matmul(&chunk_overlapping(&v, w)?)?;

    // overlap-add: row i appears in chunk i/ow (first half) and i/ow - 1 (second half)
    let mut first = Vec::with_capacity(h * n);
    let mut second = Vec::with_capacity(h * n);
    for hh in 0..h {
        for i in 0..n {
            let (block, r) = (i / ow, i % ow);
            first.push(if block < chunks {
                ((hh * chunks + block) * w + r) as u32
            } else {
                GATHER_FILL
            });
            second.push(if block >= 1 {
                ((hh * chunks + block - 1) * w + r + ow) as u32
            } else {
                GATHER_FILL
            });
        }
    }
    let lower = chunk_out.gather_rows(s, Arc::from(first), &[h, n, s])?;
    let upper = chunk_out.gather_rows(s, Arc::from(second), &[h, n, s])?;
    Ok(lower.add(&upper)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    #[test]
    fn chunks_of_eight_rows_with_window_four() {
        let x = Tensor::<f64>::from_f64(&(0..8).map(f64::from).collect::<Vec<_>>(), &[1, 8, 1]).unwrap();
        let c = chunk_overlapping(&x, 4).unwrap();
        assert_eq!(c.shape(), &[1, 3, 4, 1]);
        assert_eq!(c.data(), &[0., 1., 2., 3., 2., 3., 4., 5., 4., 5., 6., 7.]);
    }

    #[test]
    fn sequence_equal_to_window_is_one_chunk() {
        let x = random(&[2, 6, 3], 1);
        let c = chunk_overlapping(&x, 6).unwrap();
        assert_eq!(c.shape(), &[2, 1, 6, 3]);
        assert_eq!(c.data(), x.data());
    }

    #[test]
    fn interior_rows_appear_in_exactly_two_chunks() {
        let (n, w) = (24, 8);
        let x = Tensor::<f64>::from_f64(&(0..n).map(|v| v as f64).collect::<Vec<_>>(), &[1, n, 1]).unwrap();
        let c = chunk_overlapping(&x, w).unwrap();
        let mut counts = vec![0; n];
        for &v in c.data() {
            counts[v as usize] += 1;
        }
        for (i, &cnt) in counts.iter().enumerate() {
            assert!(cnt <= 2);
            if i >= w / 2 && i < n - w / 2 {
                assert_eq!(cnt, 2, "row {i}");
            }
        }
    }

    #[test]
    fn misaligned_length_is_a_precondition_error() {
        let x = random(&[1, 7, 2], 1);
        assert!(matches!(chunk_overlapping(&x, 4), Err(AttentionError::Precondition(_))));
    }

    #[test]
    fn window_two_causal_sees_previous_and_self() {
        let (n, s) = (6, 2);
        let (q, k, v) = (random(&[1, n, s], 1), random(&[1, n, s], 2), random(&[1, n, s], 3));
        let cfg = AttentionConfig::sliding(1, s, 2);
        let out = sliding_window_attention(&q, &k, &v, &cfg, None).unwrap();
        assert_eq!(out.status, AttentionStatus::Windowed);
        for i in 1..n {
            let score = |j: usize| (0..s).map(|d| q.data()[i * s + d] * k.data()[j * s + d]).sum::<f64>() / (s as f64).sqrt();
            let (a, b) = (score(i - 1), score(i));
            let m = a.max(b);
            let (pa, pb) = ((a - m).exp(), (b - m).exp());
            for d in 0..s {
                let expect = (pa * v.data()[(i - 1) * s + d] + pb * v.data()[i * s + d]) / (pa + pb);
                assert!((out.output.data()[i * s + d] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_band_oracle_with_padding_and_dilation() {
        for &(n, w, dil, causal) in &[(13, 4, 1, true), (10, 6, 2, false), (32, 8, 1, true), (9, 8, 3, true)] {
            let (q, k, v) = (random(&[2, n, 3], 1), random(&[2, n, 3], 2), random(&[2, n, 3], 3));
            let cfg = AttentionConfig::sliding(2, 3, w).with_dilation(dil).with_causal(causal);
            let got = sliding_window_attention(&q, &k, &v, &cfg, None).unwrap();
            let mask = band_mask_oracle(n, w, dil, causal);
            let expect = masked_attention(&q, &k, &v, &mask, 0.0, None).unwrap();
            for (a, b) in got.output.data().iter().zip(expect.data()) {
                assert!((a - b).abs() < 1e-10, "n={n} w={w} dil={dil}");
            }
        }
    }

    #[test]
    fn wide_window_falls_back_to_dense() {
        let (q, k, v) = (random(&[1, 4, 2], 1), random(&[1, 4, 2], 2), random(&[1, 4, 2], 3));
        let cfg = AttentionConfig::sliding(1, 2, 8);
        let out = sliding_window_attention(&q, &k, &v, &cfg, None).unwrap();
        assert_eq!(out.status, AttentionStatus::DenseFallback);
        let chunked = chunked_band_attention(&q, &k, &v, &cfg, None).unwrap();
        for (a, b) in out.output.data().iter().zip(chunked.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
