//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! lambda = 0.3
//! mode = contrastive_adversarial
//! d_h = 64
//! ```

use std::path::Path;

use contradv::advtrain::{FgsmDirection, Mode, TrainConfig};
use contradv::encoder::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const KEYS: [&str; 14] = [
    "lambda",
    "epsilon",
    "tau",
    "lr",
    "batch_size",
    "epochs",
    "seed",
    "mode",
    "fgsm_direction",
    "d_h",
    "n_layers",
    "n_heads",
    "d_proj",
    "max_len",
];

/// Everything a run needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub d_h: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_proj: usize,
    pub max_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            d_h: 64,
            n_layers: 2,
            n_heads: 4,
            d_proj: 32,
            max_len: 32,
        }
    }
}

impl RunConfig {
    /// Model shape for a vocabulary and class count. The feed-forward width
    /// is `2·d_h` and the projection head has two layers.
    pub fn model(&self, vocab_size: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden_size: self.d_h,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ff_size: 2 * self.d_h,
            max_len: self.max_len,
            n_classes,
            proj_size: self.d_proj,
            proj_layers: 2,
            dropout: 0.0,
        }
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::User(format!("{key}: cannot parse {value:?}")))
        }
        let t = &mut self.train;
        match key {
            "lambda" => t.lambda = num(key, value)?,
            "epsilon" => t.epsilon = num(key, value)?,
            "tau" => t.tau = num(key, value)?,
            "lr" => t.learning_rate = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "mode" => t.mode = value.parse::<Mode>().map_err(|e| CliError::User(e.to_string()))?,
            "fgsm_direction" => {
                t.fgsm_direction = value
                    .parse::<FgsmDirection>()
                    .map_err(|e| CliError::User(e.to_string()))?
            }
            "d_h" => self.d_h = num(key, value)?,
            "n_layers" => self.n_layers = num(key, value)?,
            "n_heads" => self.n_heads = num(key, value)?,
            "d_proj" => self.d_proj = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            _ => {
                return Err(CliError::User(format!(
                    "unknown config key {key:?} (expected one of {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::User(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::User(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The config in file form, keys in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let values = [
            t.lambda.to_string(),
            t.epsilon.to_string(),
            t.tau.to_string(),
            t.learning_rate.to_string(),
            t.batch_size.to_string(),
            t.epochs.to_string(),
            t.seed.to_string(),
            t.mode.to_string(),
            t.fgsm_direction.to_string(),
            self.d_h.to_string(),
            self.n_layers.to_string(),
            self.n_heads.to_string(),
            self.d_proj.to_string(),
            self.max_len.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
