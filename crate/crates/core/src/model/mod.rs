//! Decoder-only transformer and LSTM language models over event tokens.

mod config;
mod lstm;
mod params;
mod positional;
mod transformer;

pub use config::{LstmConfig, ModelConfig, ModelSpec};
pub use lstm::LstmModel;
pub use params::{Linear, Param, ParamRole, ParamStore};
pub use positional::positional_encoding;
pub use transformer::TransformerModel;

use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionError;
use crate::tensor::{Element, Tensor, TensorError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("token {token} outside vocabulary of size {vocab_size}")]
    Vocabulary { token: usize, vocab_size: usize },
    #[error("sequence of length {n} exceeds max_len {max_len}")]
    Capacity { n: usize, max_len: usize },
    #[error("empty token sequence")]
    Empty,
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A model of either family behind one interface.
#[derive(Debug, Clone)]
pub enum Model<T: Element> {
    Transformer(TransformerModel<T>),
    Lstm(LstmModel<T>),
}

impl<T: Element> Model<T> {
    /// Builds the parameter layout for `spec` with placeholder values
    /// (zeros, unit norm gains); see `training::init_parameters`.
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Transformer(c) => Self::Transformer(TransformerModel::new(c.clone())?),
            ModelSpec::Lstm(c) => Self::Lstm(LstmModel::new(c.clone())?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::Transformer(m) => ModelSpec::Transformer(m.config().clone()),
            Self::Lstm(m) => ModelSpec::Lstm(m.config().clone()),
        }
    }

    /// Next-token logits `[n, vocab]`. Passing `rng` enables dropout.
    pub fn forward(&self, tokens: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor<T>> {
        match self {
            Self::Transformer(m) => m.forward(tokens, rng),
            Self::Lstm(m) => m.forward(tokens, rng),
        }
    }

    pub fn params(&self) -> &ParamStore<T> {
        match self {
            Self::Transformer(m) => &m.params,
            Self::Lstm(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            Self::Transformer(m) => &mut m.params,
            Self::Lstm(m) => &mut m.params,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params().num_values()
    }

    pub fn vocab_size(&self) -> usize {
        self.spec().vocab_size()
    }

    /// A copy whose parameters do not record gradients, for inference.
    pub fn frozen(&self) -> Self {
        let mut out = self.clone();
        for p in out.params_mut().iter_mut() {
            p.tensor = p.tensor.detach();
        }
        out
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Element>(&self) -> Model<U> {
        let mut out = Model::<U>::new(&self.spec()).expect("spec already validated");
        for (dst, src) in out.params_mut().iter_mut().zip(self.params().iter()) {
            dst.tensor = Tensor::parameter(src.tensor.cast::<U>().into_data(), src.tensor.shape())
                .expect("same shape");
        }
        out
    }
}

pub(crate) fn check_tokens(tokens: &[usize], vocab_size: usize, max_len: Option<usize>) -> Result<()> {
    if tokens.is_empty() {
        return Err(ModelError::Empty);
    }
    if let Some(max_len) = max_len {
        if tokens.len() > max_len {
            return Err(ModelError::Capacity {
                n: tokens.len(),
                max_len,
            });
        }
    }
    if let Some(&token) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(ModelError::Vocabulary { token, vocab_size });
    }
    Ok(())
}

/// Applies dropout when an rng is supplied.
pub(crate) fn maybe_dropout<T: Element>(x: Tensor<T>, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Tensor<T> {
    match rng {
        Some(r) if p > 0.0 => x.dropout(p, *r),
        _ => x,
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::ParamStore;
    use crate::tensor::Element;

    /// Fills every parameter with N(0, 0.3) draws.
    pub(crate) fn randomize<T: Element>(params: &mut ParamStore<T>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3).unwrap();
        for p in params.iter_mut() {
            for v in p.tensor.data_mut() {
                *v = T::of(normal.sample(&mut rng));
            }
        }
    }
}
