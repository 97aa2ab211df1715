use super::elementwise::broadcast_shapes;
use crate::tensor::{numel, Element, MatRef, Result, Tensor, TensorError};

/// Layout of a batched product `op(A) · op(B)` after shape checking.
struct Plan {
    batch: Vec<usize>,
    a_batch_strides: Vec<usize>,
    b_batch_strides: Vec<usize>,
    a_rows: usize,
    a_cols: usize,
    b_rows: usize,
    b_cols: usize,
    m: usize,
    n: usize,
}

fn batch_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    // strides in units of whole matrices, 0 on broadcast axes
    let offset = out.len() - shape.len();
    let mut s = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        s[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    s
}

impl Plan {
    fn new(a: &[usize], b: &[usize], ta: bool, tb: bool) -> Result<Plan> {
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        };
        if a.len() < 2 || b.len() < 2 {
            return Err(mismatch());
        }
        let (a_rows, a_cols) = (a[a.len() - 2], a[a.len() - 1]);
        let (b_rows, b_cols) = (b[b.len() - 2], b[b.len() - 1]);
        let (m, k) = if ta { (a_cols, a_rows) } else { (a_rows, a_cols) };
        let (kb, n) = if tb { (b_cols, b_rows) } else { (b_rows, b_cols) };
        if k != kb {
            return Err(mismatch());
        }
        let (ab, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
        let batch = broadcast_shapes(ab, bb).ok_or_else(mismatch)?;
        Ok(Plan {
            a_batch_strides: batch_strides(ab, &batch),
            b_batch_strides: batch_strides(bb, &batch),
            batch,
            a_rows,
            a_cols,
            b_rows,
            b_cols,
            m,
            n,
        })
    }

    /// (a matrix index, b matrix index) for each output matrix.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let total = numel(&self.batch);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.batch.len()];
        for _ in 0..total {
            let ia = idx.iter().zip(&self.a_batch_strides).map(|(i, s)| i * s).sum();
            let ib = idx.iter().zip(&self.b_batch_strides).map(|(i, s)| i * s).sum();
            out.push((ia, ib));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < self.batch[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }
}

fn view<T>(data: &[T], offset: usize, rows: usize, cols: usize, transposed: bool) -> MatRef<'_, T> {
    let v = MatRef::dense(data, offset, rows, cols);
    if transposed {
        v.t()
    } else {
        v
    }
}

fn matmul_impl<T: Element>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Result<Tensor<T>> {
    let plan = Plan::new(a.shape(), b.shape(), ta, tb)?;
    let (m, n) = (plan.m, plan.n);
    let a_size = plan.a_rows * plan.a_cols;
    let b_size = plan.b_rows * plan.b_cols;
    let pairs = plan.pairs();
    let mut out = vec![T::zero(); pairs.len() * m * n];
    for (o, &(ia, ib)) in pairs.iter().enumerate() {
        let va = view(a.data(), ia * a_size, plan.a_rows, plan.a_cols, ta);
        let vb = view(b.data(), ib * b_size, plan.b_rows, plan.b_cols, tb);
        T::gemm(T::one(), va, vb, T::zero(), &mut out, o * m * n, n);
    }
    let mut shape = plan.batch.clone();
    shape.extend([m, n]);
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(out, shape, "matmul", &[a, b], move |g| {
        let (ad, bd) = (ac.data(), bc.data());
        let ga = ac.requires_grad().then(|| {
            let mut ga = vec![T::zero(); ac.numel()];
            for (o, &(ia, ib)) in pairs.iter().enumerate() {
                let gm = MatRef::dense(g, o * m * n, m, n);
                let opb = view(bd, ib * b_size, plan.b_rows, plan.b_cols, tb);
                if ta {
                    // dA = op(B) · Gᵀ
                    T::gemm(T::one(), opb, gm.t(), T::one(), &mut ga, ia * a_size, plan.a_cols);
                } else {
                    // dA = G · op(B)ᵀ
                    T::gemm(T::one(), gm, opb.t(), T::one(), &mut ga, ia * a_size, plan.a_cols);
                }
            }
            ga
        });
        let gb = bc.requires_grad().then(|| {
            let mut gb = vec![T::zero(); bc.numel()];
            for (o, &(ia, ib)) in pairs.iter().enumerate() {
                let gm = MatRef::dense(g, o * m * n, m, n);
                let opa = view(ad, ia * a_size, plan.a_rows, plan.a_cols, ta);
                if tb {
                    // dB = Gᵀ · op(A)
                    T::gemm(T::one(), gm.t(), opa, T::one(), &mut gb, ib * b_size, plan.b_cols);
                } else {
                    // dB = op(A)ᵀ · G
                    T::gemm(T::one(), opa.t(), gm, T::one(), &mut gb, ib * b_size, plan.b_cols);
                }
            }
            gb
        });
        vec![ga, gb]
    }))
}

impl<T: Element> Tensor<T> {
    /// Batched matrix product `[..., m, k] x [..., k, n] -> [..., m, n]` with
    /// broadcasting over the leading batch dimensions.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, other, false, false)
    }

    /// `self · otherᵀ` on the last two axes without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, other, false, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triple_loop(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn identity_products() {
        let m = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let eye = Tensor::<f32>::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        assert_eq!(m.matmul(&eye).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let eye3 = Tensor::<f32>::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[3, 3]).unwrap();
        let r = Tensor::<f32>::from_vec((0..6).map(|v| v as f32).collect(), &[3, 2]).unwrap();
        assert_eq!(eye3.matmul(&r).unwrap().data(), r.data());
    }

    #[test]
    fn random_product_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expect = triple_loop(&a, &b, 5, 7, 3);
        let ta = Tensor::<f32>::from_f64(&a, &[5, 7]).unwrap();
        let tb = Tensor::<f32>::from_f64(&b, &[7, 3]).unwrap();
        let got = ta.matmul(&tb).unwrap();
        assert_eq!(got.shape(), &[5, 3]);
        for (g, e) in got.data().iter().zip(&expect) {
            assert!((*g as f64 - e).abs() <= 1e-6, "{g} vs {e}");
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![4, 2]
            }
        );
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[4, 2]"));
    }

    #[test]
    fn broadcast_batch_and_transposed_rhs() {
        let a = Tensor::<f64>::from_f64(&(0..12).map(f64::from).collect::<Vec<_>>(), &[2, 2, 3]).unwrap();
        let b = Tensor::<f64>::from_f64(&[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], &[2, 3]).unwrap();
        let c = a.matmul_nt(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.data(), &[2.0, 3.0, 8.0, 9.0, 14.0, 15.0, 20.0, 21.0]);
    }
}
