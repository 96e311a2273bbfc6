use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::LossWeights;

/// Floating-point width used for training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Optimization hyperparameters. Defaults follow the CIFAR-100 setup:
/// batch 64, 20 epochs, 10 warmup iterations, learning rate 1e-4, weight
/// decay 1e-3, explanation weight 1 and no sparsity term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_iters: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub lambda_expl: f64,
    pub lambda_sparse: f64,
    pub seed: u64,
    /// Record a concept snapshot every this many epochs.
    pub snapshot_every: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 20,
            warmup_iters: 10,
            base_lr: 1e-4,
            weight_decay: 1e-3,
            lambda_expl: 1.0,
            lambda_sparse: 0.0,
            seed: 0,
            snapshot_every: 1,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_expl: self.lambda_expl,
            lambda_sparse: self.lambda_sparse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if !(self.base_lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "rates must be nonnegative, got base_lr={} weight_decay={}",
                self.base_lr, self.weight_decay
            )));
        }
        self.weights().validate()
    }
}
