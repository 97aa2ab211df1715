use rand::Rng;

use super::elementwise::{broadcast_strides, for_each_broadcast};
use crate::tensor::{Element, Result, Tensor, TensorError};

/// Probabilities from [`Tensor::masked_softmax`] plus the number of rows in
/// which every entry was masked (those rows are all zeros, never NaN).
#[derive(Debug, Clone)]
pub struct SoftmaxOutput<T: Element> {
    pub probs: Tensor<T>,
    pub fully_masked_rows: usize,
}

impl<T: Element> Tensor<T> {
    /// Softmax over the last axis restricted to entries where `mask` is
    /// non-zero. `mask` broadcasts against `self` and is not differentiated.
    pub fn masked_softmax(&self, mask: &Tensor<T>) -> Result<SoftmaxOutput<T>> {
        if self.rank() == 0 {
            return Err(TensorError::Dimension("softmax of a scalar".into()));
        }
        if super::broadcast_shapes(self.shape(), mask.shape()).as_deref() != Some(self.shape()) {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                lhs: self.shape().to_vec(),
                rhs: mask.shape().to_vec(),
            });
        }
        let keep: Vec<bool> = if mask.shape() == self.shape() {
            mask.data().iter().map(|&m| m != T::zero()).collect()
        } else {
            let mut keep = vec![false; self.numel()];
            let sm = broadcast_strides(mask.shape(), self.shape());
            let zero = vec![0; self.rank()];
            let md = mask.data();
            for_each_broadcast(self.shape(), &sm, &zero, |o, i, _| keep[o] = md[i] != T::zero());
            keep
        };
        Ok(self.softmax_with(Some(keep)))
    }

    pub fn softmax(&self) -> Tensor<T> {
        self.softmax_with(None).probs
    }

    fn softmax_with(&self, keep: Option<Vec<bool>>) -> SoftmaxOutput<T> {
        let n = *self.shape().last().unwrap_or(&1);
        let x = self.data();
        let mut y = vec![T::zero(); x.len()];
        let mut fully_masked_rows = 0;
        if n > 0 {
            for (r, (xr, yr)) in x.chunks(n).zip(y.chunks_mut(n)).enumerate() {
                let kept = |j: usize| keep.as_ref().is_none_or(|k| k[r * n + j]);
                let mut max = T::neg_infinity();
                for (j, &v) in xr.iter().enumerate() {
                    if kept(j) && v > max {
                        max = v;
                    }
                }
                if max == T::neg_infinity() {
                    fully_masked_rows += 1;
                    continue;
                }
                let mut total = T::zero();
                for (j, (&v, o)) in xr.iter().zip(yr.iter_mut()).enumerate() {
                    if kept(j) {
                        *o = (v - max).exp();
                        total += *o;
                    }
                }
                let inv = T::one() / total;
                yr.iter_mut().for_each(|v| *v *= inv);
            }
        }
        let out = y.clone();
        let probs = Tensor::from_op(y, self.shape().to_vec(), "softmax", &[self], move |g| {
            let mut grad = vec![T::zero(); g.len()];
            if n > 0 {
                for ((gr, yr), dr) in g.chunks(n).zip(out.chunks(n)).zip(grad.chunks_mut(n)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = yv * (gv - dot);
                    }
                }
            }
            vec![Some(grad)]
        });
        SoftmaxOutput {
            probs,
            fully_masked_rows,
        }
    }

    /// Normalizes each row over the last axis to zero mean and unit
    /// (population) variance, then applies `gamma * x + beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        let d = *self.shape().last().unwrap_or(&0);
        if d == 0 {
            return Err(TensorError::Dimension(format!(
                "layer_norm over an empty last axis (shape {:?})",
                self.shape()
            )));
        }
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape().to_vec(),
                rhs: gamma.shape().to_vec(),
            });
        }
        assert!(eps > 0.0, "layer_norm eps must be positive");
        let eps = T::of(eps);
        let inv_d = T::one() / T::of(d as f64);
        let rows = self.numel() / d;
        let mut xhat = vec![T::zero(); self.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); self.numel()];
        let (gd, bd) = (gamma.data(), beta.data());
        for r in 0..rows {
            let xr = &self.data()[r * d..(r + 1) * d];
            let mean = xr.iter().copied().sum::<T>() * inv_d;
            let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (xr[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
        let (gc, bc) = (gamma.clone(), beta.clone());
        let x_needs = self.requires_grad();
        Ok(Tensor::from_op(out, self.shape().to_vec(), "layer_norm", &[self, gamma, beta], move |g| {
            let gd = gc.data();
            let dgamma = gc.requires_grad().then(|| {
                let mut acc = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        acc[j] += g[r * d + j] * xhat[r * d + j];
                    }
                }
                acc
            });
            let dbeta = bc.requires_grad().then(|| {
                let mut acc = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        acc[j] += g[r * d + j];
                    }
                }
                acc
            });
            let dx = x_needs.then(|| {
                let mut dx = vec![T::zero(); rows * d];
                for r in 0..rows {
                    let (mut m1, mut m2) = (T::zero(), T::zero());
                    for j in 0..d {
                        let dh = g[r * d + j] * gd[j];
                        m1 += dh;
                        m2 += dh * xhat[r * d + j];
                    }
                    m1 = m1 * inv_d;
                    m2 = m2 * inv_d;
                    for j in 0..d {
                        let dh = g[r * d + j] * gd[j];
                        dx[r * d + j] = rstd[r] * (dh - m1 - xhat[r * d + j] * m2);
                    }
                }
                dx
            });
            vec![dx, dgamma, dbeta]
        }))
    }

    /// Looks up rows of an embedding table `[vocab, dim]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Tensor<T>> {
        if self.rank() != 2 {
            return Err(TensorError::Dimension(format!(
                "embedding table must be 2-D, got {:?}",
                self.shape()
            )));
        }
        let (vocab, dim) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                limit: vocab,
            });
        }
        let idx: Vec<u32> = ids.iter().map(|&i| i as u32).collect();
        self.gather_rows(dim, idx.into(), &[ids.len(), dim])
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1 / (1 - p)`.
    pub fn dropout(&self, p: f64, rng: &mut impl Rng) -> Tensor<T> {
        assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0, 1)");
        if p == 0.0 {
            return self.clone();
        }
        let scale = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { scale })
            .collect();
        let data = self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Tensor::from_op(data, self.shape().to_vec(), "dropout", &[self], move |g| {
            vec![Some(g.iter().zip(&mask).map(|(&a, &m)| a * m).collect())]
        })
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// logits `[n, vocab]`. Positions whose target equals `ignore` are
    /// excluded. Returns the loss and the number of counted positions; with
    /// zero counted positions the loss is 0.
    pub fn cross_entropy(&self, targets: &[usize], ignore: Option<usize>) -> Result<(Tensor<T>, usize)> {
        if self.rank() != 2 || self.shape()[0] != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let v = self.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= v && Some(t) != ignore) {
            return Err(TensorError::IndexOutOfRange { index: bad, limit: v });
        }
        let counted: Vec<bool> = targets.iter().map(|&t| Some(t) != ignore).collect();
        let count = counted.iter().filter(|&&c| c).count();
        let mut probs = vec![T::zero(); self.numel()];
        let mut total = T::zero();
        for (r, row) in self.data().chunks(v).enumerate() {
            if !counted[r] {
                continue;
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let pr = &mut probs[r * v..(r + 1) * v];
            let mut z = T::zero();
            for (p, &x) in pr.iter_mut().zip(row) {
                *p = (x - max).exp();
                z += *p;
            }
            pr.iter_mut().for_each(|p| *p = *p / z);
            total += z.ln() + max - row[targets[r]];
        }
        let denom = T::of(count.max(1) as f64);
        let targets = targets.to_vec();
        let n_elems = self.numel();
        let loss = Tensor::from_op(vec![total / denom], Vec::new(), "cross_entropy", &[self], move |g| {
            let mut grad = vec![T::zero(); n_elems];
            let scale = g[0] / denom;
            for (r, &t) in targets.iter().enumerate() {
                if !counted[r] {
                    continue;
                }
                for j in 0..v {
                    grad[r * v + j] = probs[r * v + j] * scale;
                }
                grad[r * v + t] -= scale;
            }
            vec![Some(grad)]
        });
        Ok((loss, count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(v, &[v.len()]).unwrap()
    }

    #[test]
    fn uniform_softmax() {
        let x = Tensor::<f64>::from_f64(&[0.0, 0.0, 0.0], &[3]).unwrap();
        let y = x.masked_softmax(&mask(&[1.0, 1.0, 1.0])).unwrap();
        for &p in y.probs.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unmasked_entry_takes_all_mass() {
        let x = Tensor::<f64>::from_f64(&[10.0, 0.0], &[2]).unwrap();
        let y = x.masked_softmax(&mask(&[1.0, 0.0])).unwrap();
        assert_eq!(y.probs.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_of_one_two_three() {
        // exp-normalize by hand: e^k / (e + e^2 + e^3)
        let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
        let expect = [(1.0f64).exp() / z, (2.0f64).exp() / z, (3.0f64).exp() / z];
        assert!((expect[0] - 0.0900).abs() < 1e-3 && (expect[2] - 0.6652).abs() < 1e-3);
        let x = Tensor::<f32>::from_f64(&[1.0, 2.0, 3.0], &[3]).unwrap();
        let y = x.masked_softmax(&Tensor::full(&[3], 1.0)).unwrap();
        for (p, e) in y.probs.data().iter().zip(expect) {
            assert!((*p as f64 - e).abs() < 1e-6);
        }
    }

    #[test]
    fn fully_masked_row_is_zero_and_flagged() {
        let x = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let m = Tensor::<f64>::from_f64(&[0.0, 0.0, 1.0, 1.0], &[2, 2]).unwrap();
        let y = x.masked_softmax(&m).unwrap();
        assert_eq!(y.fully_masked_rows, 1);
        assert_eq!(&y.probs.data()[..2], &[0.0, 0.0]);
        assert!(y.probs.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mask_broadcasts_over_leading_axes() {
        let x = Tensor::<f64>::from_f64(&[0.0; 8], &[2, 2, 2]).unwrap();
        let m = Tensor::<f64>::from_f64(&[1.0, 0.0, 1.0, 1.0], &[2, 2]).unwrap();
        let y = x.masked_softmax(&m).unwrap();
        assert_eq!(y.probs.data(), &[1.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.5, 0.5]);
        let bad = Tensor::<f64>::zeros(&[3]);
        assert!(x.masked_softmax(&bad).is_err());
    }

    #[test]
    fn layer_norm_edge_cases() {
        let ones = Tensor::<f64>::full(&[4], 1.0);
        let zeros = Tensor::<f64>::zeros(&[4]);
        let c = Tensor::<f64>::full(&[2, 4], 3.5);
        let y = c.layer_norm(&ones, &zeros, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let x = Tensor::<f64>::from_f64(&[1.0, -1.0], &[2]).unwrap();
        let y = x
            .layer_norm(&Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), 1e-12)
            .unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-9 && (y.data()[1] + 1.0).abs() < 1e-9);

        let empty = Tensor::<f64>::zeros(&[3, 0]);
        assert!(empty.layer_norm(&Tensor::zeros(&[0]), &Tensor::zeros(&[0]), 1e-5).is_err());
    }

    #[test]
    fn layer_norm_random_row_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x = Tensor::<f32>::from_f64(&v, &[64]).unwrap();
        let y = x
            .layer_norm(&Tensor::full(&[64], 1.0), &Tensor::zeros(&[64]), 1e-5)
            .unwrap();
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / 64.0;
        let var = y.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() <= 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() <= 1e-3, "var {var}");
    }

    #[test]
    fn embedding_rejects_out_of_range_ids() {
        let table = Tensor::<f32>::zeros(&[4, 3]);
        assert!(table.embedding(&[0, 3]).is_ok());
        assert!(matches!(
            table.embedding(&[4]),
            Err(TensorError::IndexOutOfRange { index: 4, limit: 4 })
        ));
    }

    #[test]
    fn dropout_preserves_expectation_and_is_seeded() {
        let x = Tensor::<f64>::full(&[20_000], 1.0);
        let a = x.dropout(0.25, &mut ChaCha8Rng::seed_from_u64(1));
        let b = x.dropout(0.25, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.data(), b.data());
        let mean = a.data().iter().sum::<f64>() / 20_000.0;
        assert!((mean - 1.0).abs() < 0.03);
        assert!(a.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
        let same = x.dropout(0.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(same.id(), x.id());
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let v = 390;
        let uniform = Tensor::<f64>::zeros(&[3, v]);
        let (loss, n) = uniform.cross_entropy(&[1, 2, 3], None).unwrap();
        assert_eq!(n, 3);
        assert!((loss.item() - (390f64).ln()).abs() < 1e-12);

        let mut logits = vec![0.0; 2 * 5];
        logits[1] = 50.0;
        logits[5 + 4] = 50.0;
        let t = Tensor::<f64>::from_f64(&logits, &[2, 5]).unwrap();
        let (loss, _) = t.cross_entropy(&[1, 4], None).unwrap();
        assert!(loss.item() < 1e-12);

        let (loss, n) = t.cross_entropy(&[7, 7], Some(7)).unwrap();
        assert_eq!((loss.item(), n), (0.0, 0));
    }
}
