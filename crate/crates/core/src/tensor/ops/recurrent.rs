use crate::tensor::{Element, MatRef, Result, Tensor, TensorError};

fn sigmoid<T: Element>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Element> Tensor<T> {
    /// Runs an LSTM over precomputed input projections `self = [n, 4H]`
    /// (gates ordered input, forget, cell, output) with recurrent weights
    /// `w_hh = [H, 4H]`, starting from zero state. Returns every hidden
    /// state as `[n, H]`.
    ///
    /// Backpropagation through time is done in one node, so the recurrent
    /// weight gradient is a single `[H, n] x [n, 4H]` product rather than
    /// one outer product per step.
    pub fn lstm_sequence(&self, w_hh: &Tensor<T>) -> Result<Tensor<T>> {
        let (&[n, g4], &[hd, g4w]) = (self.shape(), w_hh.shape()) else {
            return Err(TensorError::Dimension(format!(
                "lstm_sequence expects [n, 4H] and [H, 4H], got {:?} and {:?}",
                self.shape(),
                w_hh.shape()
            )));
        };
        if g4 != 4 * hd || g4w != g4 {
            return Err(TensorError::ShapeMismatch {
                op: "lstm_sequence",
                lhs: self.shape().to_vec(),
                rhs: w_hh.shape().to_vec(),
            });
        }
        let w = w_hh.to_vec();
        // gates after activation, cell states and hidden states per step
        let mut gates = self.to_vec();
        let mut cells = vec![T::zero(); n * hd];
        let mut hidden = vec![T::zero(); n * hd];
        for t in 0..n {
            if t > 0 {
                T::gemm(
                    T::one(),
                    MatRef::dense(&hidden, (t - 1) * hd, 1, hd),
                    MatRef::dense(&w, 0, hd, g4),
                    T::one(),
                    &mut gates,
                    t * g4,
                    g4,
                );
            }
            let z = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..hd {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hd + j]);
                let g = z[2 * hd + j].tanh();
                let o = sigmoid(z[3 * hd + j]);
                z[j] = i;
                z[hd + j] = f;
                z[2 * hd + j] = g;
                z[3 * hd + j] = o;
                let c_prev = if t > 0 { cells[(t - 1) * hd + j] } else { T::zero() };
                let c = f * c_prev + i * g;
                cells[t * hd + j] = c;
                hidden[t * hd + j] = o * c.tanh();
            }
        }
        let out = hidden.clone();
        Ok(Tensor::from_op(out, vec![n, hd], "lstm_sequence", &[self, w_hh], move |grad| {
            let mut dz = vec![T::zero(); n * g4];
            let mut dh_next = vec![T::zero(); hd];
            let mut dc_next = vec![T::zero(); hd];
            for t in (0..n).rev() {
                let z = &gates[t * g4..(t + 1) * g4];
                let d = &mut dz[t * g4..(t + 1) * g4];
                for j in 0..hd {
                    let (i, f, g, o) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
                    let c = cells[t * hd + j];
                    let c_prev = if t > 0 { cells[(t - 1) * hd + j] } else { T::zero() };
                    let tc = c.tanh();
                    let dh = grad[t * hd + j] + dh_next[j];
                    let dc = dh * o * (T::one() - tc * tc) + dc_next[j];
                    d[j] = dc * g * i * (T::one() - i);
                    d[hd + j] = dc * c_prev * f * (T::one() - f);
                    d[2 * hd + j] = dc * i * (T::one() - g * g);
                    d[3 * hd + j] = dh * tc * o * (T::one() - o);
                    dc_next[j] = dc * f;
                }
                if t > 0 {
                    T::gemm(
                        T::one(),
                        MatRef::dense(&dz, t * g4, 1, g4),
                        MatRef::dense(&w, 0, hd, g4).t(),
                        T::zero(),
                        &mut dh_next,
                        0,
                        hd,
                    );
                }
            }
            // step t sees h_{t-1}; the first step's recurrent input is zero
            let mut dw = vec![T::zero(); hd * g4];
            if n > 1 {
                T::gemm(
                    T::one(),
                    MatRef::dense(&hidden, 0, n - 1, hd).t(),
                    MatRef::dense(&dz, g4, n - 1, g4),
                    T::zero(),
                    &mut dw,
                    0,
                    g4,
                );
            }
            vec![Some(dz), Some(dw)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    // the same recurrence from elementwise ops, one graph node per gate
    fn unfused(p: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let (n, hd) = (p.shape()[0], w.shape()[0]);
        let mut h = Tensor::zeros(&[1, hd]);
        let mut c = Tensor::zeros(&[1, hd]);
        let mut outs = Vec::new();
        for t in 0..n {
            let z = p.narrow(0, t, 1).unwrap().add(&h.matmul(w).unwrap()).unwrap();
            let gate = |k: usize| z.narrow(1, k * hd, hd).unwrap();
            let (i, f, g, o) = (gate(0).sigmoid(), gate(1).sigmoid(), gate(2).tanh(), gate(3).sigmoid());
            c = f.mul(&c).unwrap().add(&i.mul(&g).unwrap()).unwrap();
            h = o.mul(&c.tanh()).unwrap();
            outs.push(h.clone());
        }
        Tensor::concat(&outs).unwrap()
    }

    #[test]
    fn matches_unfused_recurrence() {
        let (p, w) = (random(&[7, 12], 1), random(&[3, 12], 2));
        let fused = p.lstm_sequence(&w).unwrap();
        for (a, b) in fused.data().iter().zip(unfused(&p, &w).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let params = vec![("p".to_string(), random(&[6, 16], 3)), ("w".to_string(), random(&[4, 16], 4))];
        let weights = random(&[6, 4], 5);
        let r = check_gradients(&params, 1e-5, |t| Ok(t[0].lstm_sequence(&t[1])?.mul(&weights)?.sum())).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(random(&[3, 8], 1).lstm_sequence(&random(&[3, 8], 2)).is_err());
        assert!(random(&[3, 12], 1).lstm_sequence(&random(&[3, 8], 2)).is_err());
    }
}
