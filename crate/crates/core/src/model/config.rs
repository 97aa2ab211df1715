use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::attention::{AttentionConfig, AttentionMode};

/// Decoder-only transformer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub attention: AttentionConfig,
    #[serde(default)]
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 390,
            d_model: 128,
            num_layers: 4,
            num_heads: 4,
            head_dim: 32,
            ff_dim: 512,
            max_len: 1024,
            attention: AttentionConfig::new(AttentionMode::Relative, 4, 32),
            dropout_p: 0.1,
        }
    }
}

impl ModelConfig {
    /// A config with `d_model = heads * head_dim` and the attention block
    /// sized to match.
    pub fn new(
        vocab_size: usize,
        num_layers: usize,
        num_heads: usize,
        head_dim: usize,
        ff_dim: usize,
        max_len: usize,
        mode: AttentionMode,
    ) -> Self {
        Self {
            vocab_size,
            d_model: num_heads * head_dim,
            num_layers,
            num_heads,
            head_dim,
            ff_dim,
            max_len,
            attention: AttentionConfig::new(mode, num_heads, head_dim),
            dropout_p: 0.0,
        }
    }

    pub fn with_window(mut self, attention_window: usize) -> Self {
        self.attention.attention_window = attention_window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.ff_dim == 0 {
            return bad("vocab_size, d_model and ff_dim must be positive".into());
        }
        if self.num_heads * self.head_dim != self.d_model {
            return bad(format!(
                "num_heads ({}) x head_dim ({}) != d_model ({})",
                self.num_heads, self.head_dim, self.d_model
            ));
        }
        if self.attention.num_heads != self.num_heads || self.attention.head_dim != self.head_dim {
            return bad("attention heads/head_dim disagree with the model".into());
        }
        if self.d_model % 2 != 0 {
            return bad(format!("d_model {} must be even for sinusoidal encoding", self.d_model));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(self.attention.validate()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    #[serde(default)]
    pub dropout_p: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            vocab_size: 390,
            embed_dim: 128,
            hidden_dim: 256,
            num_layers: 2,
            dropout_p: 0.1,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(ModelError::Config(format!("all LSTM dimensions must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

/// Either model family, as stored in checkpoints and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Transformer(ModelConfig),
    Lstm(LstmConfig),
}

impl ModelSpec {
    pub fn vocab_size(&self) -> usize {
        match self {
            Self::Transformer(c) => c.vocab_size,
            Self::Lstm(c) => c.vocab_size,
        }
    }

    /// Longest sequence the model accepts, if bounded.
    pub fn max_len(&self) -> Option<usize> {
        match self {
            Self::Transformer(c) => Some(c.max_len),
            Self::Lstm(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Transformer(c) => c.validate(),
            Self::Lstm(c) => c.validate(),
        }
    }

    /// Short family label: `relative`, `sliding_window`, `dense_causal` or `lstm`.
    pub fn label(&self) -> String {
        match self {
            Self::Transformer(c) => c.attention.mode.to_string(),
            Self::Lstm(_) => "lstm".into(),
        }
    }
}
