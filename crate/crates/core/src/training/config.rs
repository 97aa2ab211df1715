use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AdamConfig, Result, TrainError};
use crate::model::ModelSpec;

pub const SEED_ENV: &str = "BANDFORMER_SEED";
pub const THREADS_ENV: &str = "BANDFORMER_THREADS";

/// Where training windows come from when run from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Directory of `.bbtk` token files.
    pub tokens: PathBuf,
    /// Share of files (by sorted name, taken from the end) held out for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    pub window_len: usize,
    /// Defaults to `window_len`.
    #[serde(default)]
    pub stride: Option<usize>,
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_steps: u64,
    pub use_xavier_init: bool,
    pub use_early_stopping: bool,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    pub eval_interval: u64,
    #[serde(default)]
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    /// Stop as soon as the training NLL of a step falls below this value.
    #[serde(default)]
    pub target_train_nll: Option<f64>,
    #[serde(default)]
    pub data: Option<DataConfig>,
}

fn default_patience() -> usize {
    200
}

fn default_clip() -> Option<f64> {
    Some(1.0)
}

impl TrainConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            optimizer: AdamConfig::default(),
            batch_size: 8,
            max_steps: 10_000,
            use_xavier_init: true,
            use_early_stopping: true,
            early_stop_patience: default_patience(),
            eval_interval: 50,
            seed: 0,
            grad_clip: default_clip(),
            target_train_nll: None,
            data: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.data.as_mut(), path.parent()) {
            if data.tokens.is_relative() {
                data.tokens = dir.join(&data.tokens);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `BANDFORMER_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| TrainError::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if !(self.optimizer.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.optimizer.lr));
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1".into());
        }
        if self.batch_size == 0 || self.eval_interval == 0 {
            return bad("batch_size and eval_interval must be positive".into());
        }
        if let Some(d) = &self.data {
            if d.window_len < 2 || !(0.0..1.0).contains(&d.val_fraction) {
                return bad("data.window_len must be >= 2 and val_fraction in [0, 1)".into());
            }
            if let Some(max_len) = self.model.max_len() {
                if d.window_len - 1 > max_len {
                    return bad(format!("window_len {} exceeds model max_len {max_len} + 1", d.window_len));
                }
            }
        }
        Ok(())
    }

    /// Grid label such as `relative_xavier_earlystop`.
    pub fn variant_label(&self) -> String {
        let opt = match (self.use_xavier_init, self.use_early_stopping) {
            (false, false) => "none",
            (true, false) => "xavier",
            (false, true) => "earlystop",
            (true, true) => "both",
        };
        format!("{}_{opt}", self.model.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LstmConfig, ModelConfig};

    #[test]
    fn toml_round_trip() {
        let mut cfg = TrainConfig::new(ModelSpec::Transformer(ModelConfig::default()));
        cfg.data = Some(DataConfig {
            tokens: "tokens".into(),
            val_fraction: 0.2,
            window_len: 512,
            stride: None,
        });
        let text = cfg.to_toml();
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn defaults_fill_optional_keys() {
        let text = r#"
            batch_size = 4
            max_steps = 100
            use_xavier_init = false
            use_early_stopping = true
            eval_interval = 10

            [model]
            family = "lstm"
            vocab_size = 390
            embed_dim = 32
            hidden_dim = 64
            num_layers = 1
        "#;
        let cfg = TrainConfig::from_toml(text).unwrap();
        assert_eq!(cfg.early_stop_patience, 200);
        assert_eq!(cfg.optimizer, AdamConfig::default());
        assert_eq!(cfg.grad_clip, Some(1.0));
        assert!(matches!(cfg.model, ModelSpec::Lstm(LstmConfig { hidden_dim: 64, .. })));
        assert_eq!(cfg.variant_label(), "lstm_earlystop");
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = TrainConfig::new(ModelSpec::Lstm(LstmConfig::default()));
        cfg.early_stop_patience = 0;
        assert!(cfg.validate().is_err());
        cfg.early_stop_patience = 1;
        cfg.optimizer.lr = 0.0;
        assert!(cfg.validate().is_err());
    }
}
