//! Dense n-dimensional tensors with tape-free reverse-mode autodiff.
//!
//! Every tensor produced by an operation on a `requires_grad` input records
//! its parents and a vector-Jacobian closure. [`Tensor::backward`] walks that
//! graph once in reverse topological order and returns gradients for every
//! `requires_grad` leaf.

mod element;
pub mod gradcheck;
mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use element::{mac_count, reset_mac_counter, Element, MatRef};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use ops::{broadcast_shapes, SoftmaxOutput, GATHER_FILL};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{0}")]
    Dimension(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of range for size {limit}")]
    IndexOutOfRange { index: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> TensorId {
    TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

/// Vector-Jacobian product: maps the output gradient to one optional
/// gradient per parent (`None` where the parent does not need one).
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub(crate) enum Backward<T> {
    Dense(BackwardFn<T>),
    /// The output is the contiguous range starting at `offset` of its only
    /// parent; its gradient is added in place instead of materializing a
    /// parent-sized buffer per slice.
    Slice { offset: usize },
}

pub(crate) struct GradNode<T: Element> {
    op: &'static str,
    parents: Vec<Tensor<T>>,
    backward: Backward<T>,
}

struct Inner<T: Element> {
    id: TensorId,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    node: Option<GradNode<T>>,
}

impl<T: Element> Drop for Inner<T> {
    // Long recurrent graphs would otherwise be freed recursively.
    fn drop(&mut self) {
        let mut stack: Vec<Tensor<T>> = match self.node.take() {
            Some(node) => node.parents,
            None => return,
        };
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(t.inner) {
                if let Some(node) = inner.node.take() {
                    stack.extend(node.parents);
                }
            }
        }
    }
}

/// Cheaply clonable handle to an immutable tensor value.
pub struct Tensor<T: Element> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<T> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {shape:?} holds {} values but {} were given",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::leaf(data, shape.to_vec(), false))
    }

    /// Trainable leaf tensor.
    pub fn parameter(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        Ok(Self::leaf(t.into_data(), shape.to_vec(), true))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&v| T::of(v)).collect(), shape)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(vec![T::zero(); numel(shape)], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::leaf(vec![value; numel(shape)], shape.to_vec(), false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![value], Vec::new(), false)
    }

    fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad,
                node: None,
            }),
        }
    }

    /// Result of an operation. A graph node is attached only when some
    /// parent requires a gradient.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        op: &'static str,
        parents: &[&Tensor<T>],
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len(), "{op} produced inconsistent shape");
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let node = requires_grad.then(|| GradNode {
            op,
            parents: parents.iter().map(|p| (*p).clone()).collect(),
            backward: Backward::Dense(Box::new(backward)),
        });
        Self {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad,
                node,
            }),
        }
    }

    /// A contiguous piece `offset..offset + numel(shape)` of `parent`.
    pub(crate) fn from_slice(parent: &Tensor<T>, offset: usize, shape: Vec<usize>, op: &'static str) -> Self {
        let len = numel(&shape);
        let data = parent.data()[offset..offset + len].to_vec();
        let requires_grad = parent.requires_grad();
        let node = requires_grad.then(|| GradNode {
            op,
            parents: vec![parent.clone()],
            backward: Backward::Slice { offset },
        });
        Self {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad,
                node,
            }),
        }
    }

    pub fn id(&self) -> TensorId {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn into_data(self) -> Vec<T> {
        match Arc::try_unwrap(self.inner) {
            Ok(mut inner) => std::mem::take(&mut inner.data),
            Err(shared) => shared.data.clone(),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// True when this tensor carries an autodiff graph node.
    pub fn has_grad_node(&self) -> bool {
        self.inner.node.is_some()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.node.as_ref().map(|n| n.op)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data[0]
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::leaf(self.inner.data.clone(), self.inner.shape.clone(), false)
    }

    /// Mutable access to a leaf's values for in-place parameter updates.
    /// The tensor keeps its id; if the storage is shared with a live graph
    /// it is copied first.
    pub fn data_mut(&mut self) -> &mut [T] {
        if Arc::get_mut(&mut self.inner).is_none() {
            let fresh = Inner {
                id: self.inner.id,
                shape: self.inner.shape.clone(),
                data: self.inner.data.clone(),
                requires_grad: self.inner.requires_grad,
                node: None,
            };
            self.inner = Arc::new(fresh);
        }
        let inner = Arc::get_mut(&mut self.inner).expect("unique after copy");
        assert!(inner.node.is_none(), "data_mut on a non-leaf tensor");
        &mut inner.data
    }

    /// Converts the element type, producing a leaf that keeps `requires_grad`.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|v| U::of(v.as_f64())).collect();
        Tensor::leaf(data, self.shape().to_vec(), self.requires_grad())
    }

    /// Reverse-mode differentiation of a scalar loss with respect to every
    /// `requires_grad` leaf reachable from it.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        let mut result = Gradients {
            grads: HashMap::new(),
        };
        if !self.requires_grad() {
            return Ok(result);
        }
        let order = self.topological_order();
        let mut pending: HashMap<TensorId, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            let Some(node) = t.inner.node.as_ref() else {
                result.grads.insert(t.id(), grad);
                continue;
            };
            let f = match &node.backward {
                Backward::Dense(f) => f,
                Backward::Slice { offset } => {
                    let parent = &node.parents[0];
                    let acc = pending
                        .entry(parent.id())
                        .or_insert_with(|| vec![T::zero(); parent.numel()]);
                    acc[*offset..*offset + grad.len()]
                        .iter_mut()
                        .zip(&grad)
                        .for_each(|(a, b)| *a += *b);
                    continue;
                }
            };
            let parent_grads = f(&grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
            for (parent, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(g.len(), parent.numel(), "gradient size from {}", node.op);
                match pending.get_mut(&parent.id()) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    None => {
                        pending.insert(parent.id(), g);
                    }
                }
            }
        }
        Ok(result)
    }

    /// Nodes reachable from `self` that require grad, parents before
    /// children, each exactly once.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited: HashSet<TensorId> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = t.inner.node.as_ref() {
                for p in node.parents.iter().rev() {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

/// Gradients of a scalar loss keyed by leaf tensor.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    grads: HashMap<TensorId, Vec<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, leaf: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&leaf.id()).map(Vec::as_slice)
    }

    /// Gradient as a tensor with the leaf's shape; zeros when the leaf did
    /// not influence the loss.
    pub fn tensor(&self, leaf: &Tensor<T>) -> Tensor<T> {
        match self.get(leaf) {
            Some(g) => Tensor::leaf(g.to_vec(), leaf.shape().to_vec(), false),
            None => Tensor::zeros(leaf.shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
