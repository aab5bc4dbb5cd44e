//! PPO with generalized advantage estimation and consistent-dropout mask
//! reuse: update-phase log-probs are recomputed under the exact masks sampled
//! during rollout.

mod gae;
mod normalizer;
mod rollout;
mod train;
mod update;

pub use gae::compute_gae;
pub use normalizer::ObsNormalizer;
pub use rollout::{collect_rollouts, EnvPool, EpisodeSampler};
pub use train::{train_loop, IterationLog, TrainSummary};
pub use update::{ppo_update, pre_update_ratios, UpdateStats};

use crate::error::{Result, RoltError};
use crate::model::DropoutMaskRecord;
use crate::obs::{ElevationMap, ProprioObs};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip: f64,
    pub envs: usize,
    pub horizon: usize,
    pub iterations: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 1.0,
            grad_clip: 1.0,
            envs: 64,
            horizon: 48,
            iterations: 300,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("lam", self.lam)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(RoltError::Config(format!("{name}={v} outside (0,1]")));
            }
        }
        if self.clip <= 0.0 {
            return Err(RoltError::Config(format!("clip={} must be positive", self.clip)));
        }
        if self.envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatches == 0 {
            return Err(RoltError::Config("envs, horizon, epochs, minibatches must be positive".into()));
        }
        Ok(())
    }
}

/// One rollout step: everything PPO needs to replay it.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: ProprioObs,
    pub map: ElevationMap,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub record: DropoutMaskRecord,
}

/// envs × horizon transitions plus bootstrap values and (after
/// [`compute_gae`]) raw advantages and returns.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub envs: usize,
    pub horizon: usize,
    /// Env-major: transitions[env * horizon + t].
    pub transitions: Vec<Transition>,
    /// V(s_T) per env for bootstrapping.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Returns and lengths of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<u64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn index(&self, env: usize, t: usize) -> usize {
        env * self.horizon + t
    }
}
