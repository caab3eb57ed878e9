use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::nn::{AdamW, AdamWConfig, ParamStore, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub percentile: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            scheduler_factor: 0.9,
            scheduler_patience: 5,
            min_lr: 5e-6,
            early_stop_patience: 25,
            max_epochs: 500,
            batch_size: 256,
            percentile: 50.0,
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(ProbeError::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err("lr must be positive");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return err("scheduler_factor must lie in (0, 1)");
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.lr) {
            return err("min_lr must lie in [0, lr]");
        }
        if self.scheduler_patience == 0 || self.early_stop_patience == 0 {
            return err("patience values must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return err("clip_norm must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return err("weight_decay must be non-negative");
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return err("percentile must lie in (0, 100)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return err("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    /// Early-stopping counter.
    pub epochs_since_improvement: usize,
    /// Scheduler counter, reset on every decay.
    pub plateau_count: usize,
    pub optimizer: AdamW,
    pub shuffle_rng: SeededRng,
    pub dropout_rng: SeededRng,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(store: &ParamStore, config: &TrainConfig) -> Self {
        let mut root = SeededRng::new(config.seed);
        let shuffle_rng = root.fork();
        let dropout_rng = root.fork();
        Self {
            epoch: 0,
            lr: config.lr,
            best_val_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
            plateau_count: 0,
            optimizer: AdamW::new(store, config.adamw()),
            shuffle_rng,
            dropout_rng,
            history: Vec::new(),
        }
    }

    pub fn should_stop(&self, config: &TrainConfig) -> bool {
        self.epochs_since_improvement >= config.early_stop_patience
    }
}

/// Plateau bookkeeping after one validation pass. Returns whether `val_loss`
/// is a new best.
pub fn scheduler_step(state: &mut TrainState, val_loss: f64, config: &TrainConfig) -> bool {
    if val_loss < state.best_val_loss {
        state.best_val_loss = val_loss;
        state.epochs_since_improvement = 0;
        state.plateau_count = 0;
        return true;
    }
    state.epochs_since_improvement += 1;
    state.plateau_count += 1;
    if state.plateau_count > config.scheduler_patience {
        state.lr = (state.lr * config.scheduler_factor).max(config.min_lr);
        state.plateau_count = 0;
    }
    false
}
