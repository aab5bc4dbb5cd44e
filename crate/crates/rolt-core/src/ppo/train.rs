//! The iteration loop: collect → GAE → update → log, with the observation
//! normalizer refreshed only between iterations so consistency holds inside
//! each one.

use super::{collect_rollouts, compute_gae, ppo_update, EnvPool, ObsNormalizer, PpoConfig};
use crate::adam::AdamState;
use crate::error::Result;
use crate::model::Policy;
use serde::Serialize;
use std::time::Instant;

/// One JSON line per iteration in the metric log.
#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Mean return of episodes completed this iteration (null when none).
    pub mean_return: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// max |ratio − 1| over the buffer before the first gradient step.
    pub pre_ratio_max_dev: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// Pooled mean episode return of iteration 1.
    pub first_iteration_return: Option<f64>,
    /// Pooled mean episode return over the final 10 iterations.
    pub final_window_return: Option<f64>,
    pub iterations: usize,
    pub total_env_steps: u64,
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Run `cfg.iterations` PPO iterations. `on_iteration` fires after each one
/// with the log row and the current policy/normalizer (for metric sinks and
/// checkpointing). Fully deterministic given the seed.
pub fn train_loop<F>(
    policy: &mut Policy,
    pool: &mut EnvPool,
    cfg: &PpoConfig,
    seed: u64,
    mut on_iteration: F,
) -> Result<TrainSummary>
where
    F: FnMut(&IterationLog, &Policy, &ObsNormalizer) -> Result<()>,
{
    cfg.validate()?;
    let mut normalizer = ObsNormalizer::new(policy.cfg.joints_per_leg);
    let mut adam = AdamState::zeros_like(&policy.params);
    let mut first_iteration_return = None;
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut total_env_steps = 0u64;

    for iteration in 1..=cfg.iterations {
        let t0 = Instant::now();
        let mut buffer = collect_rollouts(policy, pool, cfg, &normalizer)?;
        total_env_steps += buffer.len() as u64;
        compute_gae(&mut buffer, cfg);
        let stats = ppo_update(policy, &mut buffer, cfg, &mut adam, &normalizer, seed, iteration)?;

        // Refresh normalizer statistics for the next iteration.
        for tr in &buffer.transitions {
            normalizer.update(&tr.obs);
        }

        let log = IterationLog {
            iteration,
            mean_return: mean(&buffer.episode_returns),
            mean_episode_length: if buffer.episode_lengths.is_empty() {
                None
            } else {
                Some(
                    buffer.episode_lengths.iter().sum::<u64>() as f64
                        / buffer.episode_lengths.len() as f64,
                )
            },
            episodes: buffer.episode_returns.len(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            pre_ratio_max_dev: stats.pre_ratio_max_dev,
            clip_fraction: stats.clip_fraction,
            grad_norm: stats.grad_norm,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        if iteration == 1 {
            first_iteration_return = mean(&buffer.episode_returns);
        }
        window.push(buffer.episode_returns.clone());
        if window.len() > 10 {
            window.remove(0);
        }
        on_iteration(&log, policy, &normalizer)?;
    }

    let pooled: Vec<f64> = window.iter().flatten().copied().collect();
    Ok(TrainSummary {
        first_iteration_return,
        final_window_return: mean(&pooled),
        iterations: cfg.iterations,
        total_env_steps,
    })
}
