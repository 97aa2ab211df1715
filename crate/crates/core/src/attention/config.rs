use serde::{Deserialize, Serialize};

use super::{AttentionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    DenseCausal,
    Relative,
    SlidingWindow,
}

impl std::str::FromStr for AttentionMode {
    type Err = AttentionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense_causal" => Ok(Self::DenseCausal),
            "relative" => Ok(Self::Relative),
            "sliding" | "sliding_window" | "windowed" => Ok(Self::SlidingWindow),
            other => Err(AttentionError::InvalidConfig(format!("unknown attention mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::DenseCausal => "dense_causal",
            Self::Relative => "relative",
            Self::SlidingWindow => "sliding_window",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub num_heads: usize,
    pub head_dim: usize,
    pub mode: AttentionMode,
    /// Full window `w`; each position sees `w / 2` neighbours per side.
    pub attention_window: usize,
    #[serde(default = "default_dilation")]
    pub dilation: usize,
    #[serde(default)]
    pub dropout_p: f64,
    #[serde(default = "default_causal")]
    pub causal: bool,
}

fn default_dilation() -> usize {
    1
}

fn default_causal() -> bool {
    true
}

impl AttentionConfig {
    pub fn new(mode: AttentionMode, num_heads: usize, head_dim: usize) -> Self {
        Self {
            num_heads,
            head_dim,
            mode,
            attention_window: 2,
            dilation: 1,
            dropout_p: 0.0,
            causal: true,
        }
    }

    pub fn sliding(num_heads: usize, head_dim: usize, attention_window: usize) -> Self {
        Self {
            attention_window,
            ..Self::new(AttentionMode::SlidingWindow, num_heads, head_dim)
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_causal(mut self, causal: bool) -> Self {
        self.causal = causal;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn one_sided_window(&self) -> usize {
        self.attention_window / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AttentionError::InvalidConfig(m));
        if self.num_heads == 0 || self.head_dim == 0 {
            return bad(format!(
                "heads ({}) and head_dim ({}) must be positive",
                self.num_heads, self.head_dim
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        if self.mode == AttentionMode::SlidingWindow {
            if self.attention_window < 2 || self.attention_window % 2 != 0 {
                return bad(format!(
                    "attention_window must be even and >= 2, got {}",
                    self.attention_window
                ));
            }
            if self.dilation == 0 {
                return bad("dilation must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sided_window_is_half() {
        assert_eq!(AttentionConfig::sliding(1, 8, 4).one_sided_window(), 2);
        assert_eq!(AttentionConfig::sliding(1, 8, 512).one_sided_window(), 256);
    }

    #[test]
    fn rejects_odd_or_tiny_windows() {
        assert!(AttentionConfig::sliding(1, 8, 3).validate().is_err());
        assert!(AttentionConfig::sliding(1, 8, 0).validate().is_err());
        assert!(AttentionConfig::sliding(1, 8, 2).validate().is_ok());
        assert!(AttentionConfig::sliding(1, 8, 4).with_dilation(0).validate().is_err());
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("sliding_window".parse::<AttentionMode>().unwrap(), AttentionMode::SlidingWindow);
        assert_eq!("relative".parse::<AttentionMode>().unwrap(), AttentionMode::Relative);
        assert!("global".parse::<AttentionMode>().is_err());
    }
}
