use crate::tensor::{numel, Element, Result, Tensor, TensorError};

/// Numpy-style broadcast of two shapes, aligned on the trailing dimension.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Element strides of `shape` when broadcast to `out` (0 on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output position with the matching input offsets.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total = numel(out);
    if total == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = out[rank - 1];
    let (la, lb) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut o = 0;
    while o < total {
        for j in 0..last {
            f(o + j, ia + j * la, ib + j * lb);
        }
        o += last;
        // advance odometer over the leading axes
        let mut d = rank - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

/// Sums a full-size gradient back down to a broadcast operand's shape.
fn reduce_to<T: Element>(grad: &[T], out: &[usize], shape: &[usize], other: &[usize]) -> Vec<T> {
    let mut acc = vec![T::zero(); numel(shape)];
    if shape == out {
        acc.copy_from_slice(grad);
        return acc;
    }
    let s = broadcast_strides(shape, out);
    let so = broadcast_strides(other, out);
    for_each_broadcast(out, &s, &so, |o, i, _| acc[i] += grad[o]);
    acc
}

fn binary<T: Element>(a: &Tensor<T>, b: &Tensor<T>, op: Binary) -> Result<Tensor<T>> {
    let out_shape = broadcast_shapes(a.shape(), b.shape()).ok_or_else(|| TensorError::ShapeMismatch {
        op: op.name(),
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })?;
    let f = |x: T, y: T| match op {
        Binary::Add => x + y,
        Binary::Sub => x - y,
        Binary::Mul => x * y,
    };
    let data = if a.shape() == b.shape() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else {
        let mut data = vec![T::zero(); numel(&out_shape)];
        let sa = broadcast_strides(a.shape(), &out_shape);
        let sb = broadcast_strides(b.shape(), &out_shape);
        let (ad, bd) = (a.data(), b.data());
        for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
        data
    };
    let (ac, bc) = (a.clone(), b.clone());
    let out = out_shape.clone();
    Ok(Tensor::from_op(data, out_shape, op.name(), &[a, b], move |g| {
        let (sa_shape, sb_shape) = (ac.shape(), bc.shape());
        let ga = ac.requires_grad().then(|| match op {
            Binary::Add | Binary::Sub => reduce_to(g, &out, sa_shape, sb_shape),
            Binary::Mul => {
                let scaled = scale_by_other(g, &out, bc.data(), sb_shape);
                reduce_to(&scaled, &out, sa_shape, sb_shape)
            }
        });
        let gb = bc.requires_grad().then(|| match op {
            Binary::Add => reduce_to(g, &out, sb_shape, sa_shape),
            Binary::Sub => {
                let mut r = reduce_to(g, &out, sb_shape, sa_shape);
                r.iter_mut().for_each(|v| *v = -*v);
                r
            }
            Binary::Mul => {
                let scaled = scale_by_other(g, &out, ac.data(), sa_shape);
                reduce_to(&scaled, &out, sb_shape, sa_shape)
            }
        });
        vec![ga, gb]
    }))
}

/// `g * broadcast(other)` at full output size.
fn scale_by_other<T: Element>(g: &[T], out: &[usize], other: &[T], other_shape: &[usize]) -> Vec<T> {
    if other_shape == out {
        return g.iter().zip(other).map(|(&x, &y)| x * y).collect();
    }
    let so = broadcast_strides(other_shape, out);
    let zero = vec![0; out.len()];
    let mut r = vec![T::zero(); g.len()];
    for_each_broadcast(out, &so, &zero, |o, i, _| r[o] = g[o] * other[i]);
    r
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, Binary::Sub)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, Binary::Mul)
    }

    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(T) -> T,
        // derivative from (input, output)
        df: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        let output = data.clone();
        let shape = self.shape().to_vec();
        Tensor::from_op(data, shape, op, &[self], move |g| {
            let grad = g
                .iter()
                .zip(input.data())
                .zip(&output)
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(grad)]
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor<T> {
        let c = T::of(factor);
        let shape = self.shape().to_vec();
        let data = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(data, shape, "scale", &[self], move |g| {
            vec![Some(g.iter().map(|&v| v * c).collect())]
        })
    }

    pub fn add_scalar(&self, value: f64) -> Tensor<T> {
        let c = T::of(value);
        let shape = self.shape().to_vec();
        let data = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(data, shape, "add_scalar", &[self], |g| vec![Some(g.to_vec())])
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(
            "sigmoid",
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary("tanh", |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor<T> {
        let total: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], Vec::new(), "sum", &[self], move |g| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }
}
