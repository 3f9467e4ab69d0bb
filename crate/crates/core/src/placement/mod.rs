//! Decision-aware surrogate placement, its decision-unaware variant and a
//! random baseline.

pub mod buffer;
pub mod encode;
pub mod optimize;
pub mod random;
pub mod surrogate;

use serde::{Deserialize, Serialize};

pub use buffer::{Sample, TrainingBuffer};
pub use encode::Encoder;
pub use optimize::{optimize_placement, project_simplex};
pub use random::{random_fill, random_placement};
pub use surrogate::{fine_tune, train_surrogate, Activation, OptimizerConfig, SurrogateNet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    /// Gradient step on the relaxed placement.
    pub eta: f64,
    /// L2 change between iterations below which descent stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Energy weight.
    pub alpha: f64,
    /// Response-time weight.
    pub beta: f64,
    /// Response time (intervals) mapped to 1 when normalizing ART.
    pub art_horizon: f64,
    /// Container slots in the encoding.
    pub max_containers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub pretrain_epochs: usize,
    /// Mini-batches trained after each interval.
    pub finetune_batches: usize,
    /// Extra one-interval rollouts per recorded state when building the
    /// pre-training set.
    pub counterfactuals: usize,
    /// Intervals over which a placement's objective is averaged before it
    /// becomes a training target; 1 scores each interval on its own.
    pub objective_window: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            tol: 1e-2,
            max_iters: 100,
            alpha: 0.5,
            beta: 0.5,
            art_horizon: 20.0,
            max_containers: 60,
            hidden: 64,
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            buffer_capacity: 2000,
            pretrain_epochs: 30,
            finetune_batches: 2,
            counterfactuals: 8,
            objective_window: 5,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidConfig(
                "alpha and beta must be non-negative and sum to 1".into(),
            ));
        }
        if !(self.eta > 0.0 && self.tol > 0.0 && self.art_horizon > 0.0 && self.lr > 0.0) {
            return Err(Error::InvalidConfig(
                "eta, tol, art_horizon and lr must be positive".into(),
            ));
        }
        if self.max_containers == 0
            || self.objective_window == 0
            || self.hidden == 0
            || self.batch_size == 0
            || self.buffer_capacity == 0
        {
            return Err(Error::InvalidConfig("container cap, objective window, hidden width, batch size and buffer capacity must be positive".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            ..OptimizerConfig::default()
        }
    }

    /// Clamps a response time into `[0, 1]` by the configured horizon.
    pub fn normalize_art(&self, art: f64) -> f64 {
        (art / self.art_horizon).clamp(0.0, 1.0)
    }

    /// Surrogate training target: the negated placement objective.
    pub fn target(&self, s: &Sample) -> f64 {
        -s.objective(self.alpha, self.beta)
    }
}

/// Bandit reward minus weighted energy and normalized response time.
pub fn reward_placement(o_mab: f64, aec: f64, art_norm: f64, alpha: f64, beta: f64) -> f64 {
    o_mab - alpha * aec - beta * art_norm
}
