use std::sync::Arc;

use crate::tensor::{numel, Element, Result, Tensor, TensorError};

/// Index value in [`Tensor::gather_rows`] that produces a zero row.
pub const GATHER_FILL: u32 = u32::MAX;

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// out[o] = src[map[o]] for a permutation of axes.
fn permute_map(shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let src_strides = contiguous_strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let total = numel(shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    let mut offset = 0usize;
    for _ in 0..total {
        map.push(offset);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            offset += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, map)
}

impl<T: Element> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), "reshape", &[self], |g| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Reorders axes; `perm[i]` names the source axis of output axis `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let mut seen = vec![false; self.rank()];
        if perm.len() != self.rank() || perm.iter().any(|&p| p >= self.rank() || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Dimension(format!(
                "invalid permutation {perm:?} for shape {:?}",
                self.shape()
            )));
        }
        let (out_shape, map) = permute_map(self.shape(), perm);
        let src = self.data();
        let data = map.iter().map(|&i| src[i]).collect();
        let n = self.numel();
        Ok(Tensor::from_op(data, out_shape, "permute", &[self], move |g| {
            let mut grad = vec![T::zero(); n];
            for (o, &i) in map.iter().enumerate() {
                grad[i] = g[o];
            }
            vec![Some(grad)]
        }))
    }

    pub fn transpose(&self, d0: usize, d1: usize) -> Result<Tensor<T>> {
        let mut perm: Vec<usize> = (0..self.rank()).collect();
        if d0 >= perm.len() || d1 >= perm.len() {
            return Err(TensorError::Dimension(format!(
                "transpose({d0}, {d1}) on rank {}",
                self.rank()
            )));
        }
        perm.swap(d0, d1);
        self.permute(&perm)
    }

    /// Treats `self` as rows of `row_len` values and builds a tensor of shape
    /// `out_shape` whose k-th row is source row `indices[k]`, or zeros where
    /// the index is [`GATHER_FILL`]. Gradients scatter-add back.
    pub fn gather_rows(&self, row_len: usize, indices: Arc<[u32]>, out_shape: &[usize]) -> Result<Tensor<T>> {
        if row_len == 0 || self.numel() % row_len != 0 {
            return Err(TensorError::Dimension(format!(
                "row length {row_len} does not divide {} values",
                self.numel()
            )));
        }
        if numel(out_shape) != indices.len() * row_len {
            return Err(TensorError::Dimension(format!(
                "gather of {} rows x {row_len} cannot fill shape {out_shape:?}",
                indices.len()
            )));
        }
        let rows = self.numel() / row_len;
        if let Some(&bad) = indices.iter().find(|&&i| i != GATHER_FILL && i as usize >= rows) {
            return Err(TensorError::IndexOutOfRange {
                index: bad as usize,
                limit: rows,
            });
        }
        let src = self.data();
        let mut data = vec![T::zero(); indices.len() * row_len];
        for (k, &i) in indices.iter().enumerate() {
            if i != GATHER_FILL {
                let i = i as usize;
                data[k * row_len..(k + 1) * row_len].copy_from_slice(&src[i * row_len..(i + 1) * row_len]);
            }
        }
        let n = self.numel();
        Ok(Tensor::from_op(data, out_shape.to_vec(), "gather_rows", &[self], move |g| {
            let mut grad = vec![T::zero(); n];
            for (k, &i) in indices.iter().enumerate() {
                if i != GATHER_FILL {
                    let i = i as usize;
                    let dst = &mut grad[i * row_len..(i + 1) * row_len];
                    for (d, &v) in dst.iter_mut().zip(&g[k * row_len..(k + 1) * row_len]) {
                        *d += v;
                    }
                }
            }
            vec![Some(grad)]
        }))
    }

    /// Slice `len` entries starting at `start` along `dim`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if dim >= shape.len() || start + len > shape[dim] {
            return Err(TensorError::Dimension(format!(
                "narrow(dim={dim}, {start}..{}) on shape {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..dim].iter().product();
        let inner: usize = shape[dim + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[dim] = len;
        if outer == 1 {
            return Ok(Tensor::from_slice(self, start * inner, out_shape, "narrow"));
        }
        let src_block = shape[dim] * inner;
        let out_block = len * inner;
        let mut data = Vec::with_capacity(outer * out_block);
        for o in 0..outer {
            let base = o * src_block + start * inner;
            data.extend_from_slice(&self.data()[base..base + out_block]);
        }
        let n = self.numel();
        Ok(Tensor::from_op(data, out_shape, "narrow", &[self], move |g| {
            let mut grad = vec![T::zero(); n];
            for o in 0..outer {
                let base = o * src_block + start * inner;
                grad[base..base + out_block].copy_from_slice(&g[o * out_block..(o + 1) * out_block]);
            }
            vec![Some(grad)]
        }))
    }

    /// Concatenates along axis 0; all trailing dimensions must agree.
    pub fn concat(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Dimension("concat of zero tensors".into()))?;
        if first.rank() == 0 {
            return Err(TensorError::Dimension("concat of scalars".into()));
        }
        let tail = &first.shape()[1..];
        let mut rows = 0;
        for p in parts {
            if p.rank() == 0 || &p.shape()[1..] != tail {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            rows += p.shape()[0];
        }
        let mut data = Vec::with_capacity(rows * numel(tail));
        for p in parts {
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        let sizes: Vec<usize> = parts.iter().map(Tensor::numel).collect();
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        Ok(Tensor::from_op(data, shape, "concat", &refs, move |g| {
            let mut off = 0;
            sizes
                .iter()
                .map(|&s| {
                    let part = g[off..off + s].to_vec();
                    off += s;
                    Some(part)
                })
                .collect()
        }))
    }
}
