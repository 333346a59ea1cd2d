//! Experiment configuration file.
//!
//! A flat JSON object; every key is optional and unknown keys are rejected.
//!
//! | key              | default |
//! |------------------|---------|
//! | `lr`             | 1e-4    |
//! | `weight_decay`   | 0.01    |
//! | `beta1`          | 0.9     |
//! | `beta2`          | 0.999   |
//! | `epsilon`        | 1e-8    |
//! | `batch_size`     | 64      |
//! | `epochs`         | 5       |
//! | `shuffle_seed`   | 0       |
//! | `init_seed`      | 0       |
//! | `context_len`    | 256     |
//! | `horizon`        | 128     |
//! | `train_stride`   | 1       |
//! | `eval_stride`    | horizon |
//! | `patch_len`      | 32      |
//! | `embed_dim`      | 64      |
//! | `hidden_dim`     | 512     |
//! | `n_blocks`       | 2       |
//! | `initial_checkpoint` | none (random init) |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::ModelConfig;
use crate::optim::TrainConfig;
use crate::pipeline::WindowConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub context_len: usize,
    pub horizon: usize,
    pub train_stride: usize,
    pub eval_stride: Option<usize>,
    pub patch_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub initial_checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        let w = WindowConfig::default();
        Self {
            lr: t.lr,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            shuffle_seed: t.shuffle_seed,
            init_seed: m.init_seed,
            context_len: m.context_len,
            horizon: m.horizon,
            train_stride: w.train_stride,
            eval_stride: None,
            patch_len: m.patch_len,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            n_blocks: m.n_blocks,
            initial_checkpoint: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fills derived defaults so the serialized form lists every value.
    pub fn resolved(mut self) -> Self {
        self.eval_stride.get_or_insert(self.horizon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.model_config().validate()?;
        self.window_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            epochs: self.epochs,
            shuffle_seed: self.shuffle_seed,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            context_len: self.context_len,
            horizon: self.horizon,
            patch_len: self.patch_len,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            init_seed: self.init_seed,
        }
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            context_len: self.context_len,
            horizon: self.horizon,
            train_stride: self.train_stride,
            eval_stride: self.eval_stride.unwrap_or(self.horizon),
        }
    }
}
