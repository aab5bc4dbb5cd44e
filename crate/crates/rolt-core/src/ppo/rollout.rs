//! Rollout collection across a pool of independent environments.
//!
//! Each env owns a ChaCha stream derived from (seed, env index), so results
//! are identical whether workers run sequentially or via rayon.

use super::{ObsNormalizer, PpoConfig, RolloutBuffer, Transition};
use crate::error::{Result, RoltError};
use crate::model::{Phase, Policy};
use crate::obs::{ElevationMap, ProprioObs};
use crate::rng::{derive, stream};
use crate::sim::{Env, PerturbationSpec, RobotSpec, ScanConfig, Terrain};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Per-episode situation sampling: terrain, fault (uniform over {healthy} ∪
/// faults), and command velocity. Optionally kicks the base with a random
/// horizontal velocity every `push_interval` control steps during training;
/// recovery from pushes is where stepping gets learned.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    pub terrains: Vec<Terrain>,
    pub faults: Vec<PerturbationSpec>,
    pub command_range: (f64, f64),
    /// 0 disables pushes.
    pub push_interval: u64,
    /// Push magnitude bound, m/s.
    pub push_vel: f64,
}

impl EpisodeSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Terrain, PerturbationSpec, f64) {
        let terrain = self.terrains[rng.gen_range(0..self.terrains.len())];
        let idx = rng.gen_range(0..self.faults.len() + 1);
        let fault = if idx == 0 { PerturbationSpec::None } else { self.faults[idx - 1] };
        let (lo, hi) = self.command_range;
        let command = lo + (hi - lo) * rng.gen::<f64>();
        (terrain, fault, command)
    }
}

struct EnvWorker {
    env: Env,
    rng: ChaCha8Rng,
    obs: ProprioObs,
    map: ElevationMap,
    ep_return: f64,
    ep_len: u64,
}

/// A fixed set of training environments plus their rng streams and pending
/// observations.
pub struct EnvPool {
    workers: Vec<EnvWorker>,
    sampler: EpisodeSampler,
}

impl EnvPool {
    pub fn new(
        spec: &RobotSpec,
        scan: ScanConfig,
        history: usize,
        sampler: EpisodeSampler,
        envs: usize,
        seed: u64,
    ) -> Result<EnvPool> {
        if sampler.terrains.is_empty() {
            return Err(RoltError::Config("episode sampler needs at least one terrain".into()));
        }
        let mut workers = Vec::with_capacity(envs);
        for e in 0..envs {
            let mut rng = derive(seed, &[stream::ENV, e as u64]);
            let (terrain, fault, command) = sampler.sample(&mut rng);
            let mut env = Env::new(spec.clone(), terrain, scan, history)?;
            let reset_seed = rng.gen::<u64>();
            let (obs, map) = env.reset(fault, command, reset_seed)?;
            workers.push(EnvWorker { env, rng, obs, map, ep_return: 0.0, ep_len: 0 });
        }
        Ok(EnvPool { workers, sampler })
    }

    pub fn envs(&self) -> usize {
        self.workers.len()
    }
}

fn run_worker(
    worker: &mut EnvWorker,
    policy: &Policy,
    normalizer: &ObsNormalizer,
    sampler: &EpisodeSampler,
    horizon: usize,
    env_index: usize,
) -> Result<(Vec<Transition>, Vec<f64>, Vec<u64>, f64)> {
    let mut transitions = Vec::with_capacity(horizon);
    let mut ep_returns = Vec::new();
    let mut ep_lengths = Vec::new();
    for t in 0..horizon {
        let norm_obs = normalizer.normalize(&worker.obs);
        let step = policy.policy_step(&norm_obs, &worker.map, Phase::TrainRollout, &mut worker.rng, false);
        if sampler.push_interval > 0 && worker.env.state.steps > 0
            && worker.env.state.steps % sampler.push_interval == 0
        {
            let kick = (worker.rng.gen::<f64>() * 2.0 - 1.0) * sampler.push_vel;
            worker.env.state.vx += kick;
        }
        let res = worker.env.step(&step.action)?;
        if !res.reward.is_finite() {
            return Err(RoltError::NonFinite(format!(
                "reward {} in env {env_index} at step {t}",
                res.reward
            )));
        }
        if !res.obs.is_finite() || !res.map.is_finite() {
            return Err(RoltError::NonFinite(format!(
                "observation in env {env_index} at step {t}"
            )));
        }
        transitions.push(Transition {
            obs: worker.obs.clone(),
            map: worker.map.clone(),
            action: step.action,
            log_prob: step.log_prob,
            value: step.value,
            reward: res.reward,
            done: res.done,
            record: step.record,
        });
        worker.ep_return += res.reward;
        worker.ep_len += 1;
        if res.done {
            ep_returns.push(worker.ep_return);
            ep_lengths.push(worker.ep_len);
            worker.ep_return = 0.0;
            worker.ep_len = 0;
            let (terrain, fault, command) = sampler.sample(&mut worker.rng);
            worker.env.terrain = terrain;
            let reset_seed = worker.rng.gen::<u64>();
            let (obs, map) = worker.env.reset(fault, command, reset_seed)?;
            worker.obs = obs;
            worker.map = map;
        } else {
            worker.obs = res.obs;
            worker.map = res.map;
        }
    }
    // Bootstrap value for the truncated tail (deterministic eval forward).
    let norm_obs = normalizer.normalize(&worker.obs);
    let bootstrap = policy.eval_forward(&norm_obs, &worker.map).value;
    Ok((transitions, ep_returns, ep_lengths, bootstrap))
}

/// Roll every env forward `cfg.horizon` steps under the frozen policy and
/// normalizer. Every transition stores its dropout mask record; episodes
/// auto-reset with fresh situation sampling.
pub fn collect_rollouts(
    policy: &Policy,
    pool: &mut EnvPool,
    cfg: &PpoConfig,
    normalizer: &ObsNormalizer,
) -> Result<RolloutBuffer> {
    let horizon = cfg.horizon;
    let sampler = pool.sampler.clone();
    let results: Vec<Result<(Vec<Transition>, Vec<f64>, Vec<u64>, f64)>> = pool
        .workers
        .par_iter_mut()
        .enumerate()
        .map(|(e, w)| run_worker(w, policy, normalizer, &sampler, horizon, e))
        .collect();

    let envs = results.len();
    let mut transitions = Vec::with_capacity(envs * horizon);
    let mut bootstrap = Vec::with_capacity(envs);
    let mut episode_returns = Vec::new();
    let mut episode_lengths = Vec::new();
    for r in results {
        let (tr, ep_r, ep_l, boot) = r?;
        transitions.extend(tr);
        bootstrap.push(boot);
        episode_returns.extend(ep_r);
        episode_lengths.extend(ep_l);
    }
    Ok(RolloutBuffer {
        envs,
        horizon,
        transitions,
        bootstrap,
        advantages: Vec::new(),
        returns: Vec::new(),
        episode_returns,
        episode_lengths,
    })
}
