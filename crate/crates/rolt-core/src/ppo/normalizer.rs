//! Running observation normalization for proprio channels.
//!
//! Statistics are shared across legs (and across history steps for the
//! history blocks), so normalization cannot break the leg-permutation
//! equivariance of the policy. Heights are only clipped (inside the model),
//! never normalized. Stats update once per iteration, after the PPO update,
//! so rollout and replay always see identical inputs.

use crate::obs::ProprioObs;
use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Channel {
    sum: f64,
    sumsq: f64,
}

impl Channel {
    fn new() -> Self {
        Channel { sum: 0.0, sumsq: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
    }

    fn mean(&self, count: f64) -> f64 {
        if count > 0.0 {
            self.sum / count
        } else {
            0.0
        }
    }

    fn std(&self, count: f64) -> f64 {
        if count > 0.0 {
            let m = self.sum / count;
            (self.sumsq / count - m * m).max(0.0).sqrt()
        } else {
            1.0
        }
    }
}

/// Channel groups: 3J per-step leg readings (shared across legs and history
/// steps), 5 IMU channels, the command, and J prev-action channels (shared
/// across legs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    joints_per_leg: usize,
    leg: Vec<Channel>,
    leg_count: f64,
    imu: Vec<Channel>,
    imu_count: f64,
    command: Channel,
    command_count: f64,
    act: Vec<Channel>,
    act_count: f64,
}

impl ObsNormalizer {
    pub fn new(joints_per_leg: usize) -> Self {
        ObsNormalizer {
            joints_per_leg,
            leg: (0..3 * joints_per_leg).map(|_| Channel::new()).collect(),
            leg_count: 0.0,
            imu: (0..5).map(|_| Channel::new()).collect(),
            imu_count: 0.0,
            command: Channel::new(),
            command_count: 0.0,
            act: (0..joints_per_leg).map(|_| Channel::new()).collect(),
            act_count: 0.0,
        }
    }

    /// Fold one raw observation into the running statistics.
    pub fn update(&mut self, obs: &ProprioObs) {
        let block = 3 * self.joints_per_leg;
        for hist in &obs.leg_hist {
            for (i, &x) in hist.iter().enumerate() {
                self.leg[i % block].push(x);
            }
        }
        self.leg_count += (obs.leg_hist.len() * obs.leg_hist.first().map_or(0, |h| h.len() / block)) as f64;
        for (c, &x) in self.imu.iter_mut().zip(obs.imu.iter()) {
            c.push(x);
        }
        self.imu_count += 1.0;
        self.command.push(obs.command);
        self.command_count += 1.0;
        let j = self.joints_per_leg;
        for (i, &x) in obs.prev_action.iter().enumerate() {
            self.act[i % j].push(x);
        }
        self.act_count += (obs.prev_action.len() / j) as f64;
    }

    /// Normalize with the current (frozen) statistics.
    pub fn normalize(&self, obs: &ProprioObs) -> ProprioObs {
        let block = 3 * self.joints_per_leg;
        let norm = |x: f64, c: &Channel, n: f64| -> f64 {
            ((x - c.mean(n)) / (c.std(n) + EPS)).clamp(-CLIP, CLIP)
        };
        let leg_hist = obs
            .leg_hist
            .iter()
            .map(|hist| {
                hist.iter()
                    .enumerate()
                    .map(|(i, &x)| norm(x, &self.leg[i % block], self.leg_count))
                    .collect()
            })
            .collect();
        let mut imu = [0.0; 5];
        for (o, (c, &x)) in imu.iter_mut().zip(self.imu.iter().zip(obs.imu.iter())) {
            *o = norm(x, c, self.imu_count);
        }
        let j = self.joints_per_leg;
        ProprioObs {
            leg_hist,
            imu,
            command: norm(obs.command, &self.command, self.command_count),
            prev_action: obs
                .prev_action
                .iter()
                .enumerate()
                .map(|(i, &x)| norm(x, &self.act[i % j], self.act_count))
                .collect(),
        }
    }
}
