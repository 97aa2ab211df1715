use serde::{Deserialize, Serialize};

use super::Result;
use crate::tensor::{Element, Tensor};

/// What a parameter is for; drives initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// Input token embedding table `[vocab, dim]`.
    Embedding,
    /// Weight matrix `[fan_in, fan_out]`.
    Weight,
    Bias,
    NormGain,
    NormBias,
    /// Per-distance relative attention keys `[max_len, head_dim]`.
    RelativeTable,
}

#[derive(Debug, Clone)]
pub struct Param<T: Element> {
    pub name: String,
    pub role: ParamRole,
    pub tensor: Tensor<T>,
}

/// Ordered, named trainable tensors. Models address entries by index.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Element> {
    params: Vec<Param<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Registers a parameter; norm gains start at one, everything else at zero.
    pub(crate) fn add(&mut self, name: impl Into<String>, role: ParamRole, shape: &[usize]) -> usize {
        let fill = if role == ParamRole::NormGain { T::one() } else { T::zero() };
        let numel = shape.iter().product();
        let tensor = Tensor::parameter(vec![fill; numel], shape).expect("consistent shape");
        self.params.push(Param {
            name: name.into(),
            role,
            tensor,
        });
        self.params.len() - 1
    }

    pub(crate) fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            weight: self.add(format!("{name}.weight"), ParamRole::Weight, &[fan_in, fan_out]),
            bias: self.add(format!("{name}.bias"), ParamRole::Bias, &[fan_out]),
        }
    }

    pub fn get(&self, index: usize) -> &Tensor<T> {
        &self.params[index].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Replaces every tensor, in order. Used to run the model on perturbed
    /// or externally owned values.
    pub fn replace_all(&mut self, tensors: &[Tensor<T>]) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(super::ModelError::Config(format!(
                "expected {} tensors, got {}",
                self.params.len(),
                tensors.len()
            )));
        }
        for (p, t) in self.params.iter_mut().zip(tensors) {
            if p.tensor.shape() != t.shape() {
                return Err(super::ModelError::Config(format!(
                    "shape of {} is {:?}, got {:?}",
                    p.name,
                    p.tensor.shape(),
                    t.shape()
                )));
            }
            p.tensor = t.clone();
        }
        Ok(())
    }
}

/// `x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    pub(crate) fn apply<T: Element>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.matmul(params.get(self.weight))?.add(params.get(self.bias))?)
    }
}
