use serde::{Deserialize, Serialize};

use super::optim::{AdamConfig, Optimizer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds batch shuffling and dropout.
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Use every `window_stride`-th training window.
    pub window_stride: usize,
    /// Use every `val_stride`-th validation window for model selection.
    pub val_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 100,
            learning_rate: 5e-4,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            patience: None,
            clip_norm: Some(5.0),
            window_stride: 1,
            val_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("window_stride", self.window_stride),
            ("val_stride", self.val_stride),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("train.{k} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("train.learning_rate {} is invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("train: Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("train.clip_norm {c} must be positive")));
            }
        }
        if self.patience == Some(0) {
            return Err(Error::Config("train.patience must be positive when set".into()));
        }
        Ok(())
    }
}
