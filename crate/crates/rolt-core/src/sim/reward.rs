//! The nine-term reward decomposition, planar readings of the paper's terms.

use super::{SimState, CONTROL_DT};
use serde::{Deserialize, Serialize};

/// Tracking sigmas for the exponential velocity-tracking terms.
pub const SIGMA_V: f64 = 0.25;
pub const SIGMA_W: f64 = 0.25;

/// Term weights in the order of [`RewardTerms::values`].
pub const REWARD_WEIGHTS: [f64; 9] = [1.5, 0.5, -2.0, -0.05, -1.0, -2e-4, -0.01, 1.0, -0.04];

pub const TERM_NAMES: [&str; 9] = [
    "xy_velocity_tracking",
    "yaw_velocity_tracking",
    "z_velocity",
    "roll_pitch_velocity",
    "collision",
    "joint_torques",
    "action_rate",
    "foot_airtime",
    "joint_error",
];

/// Raw (unweighted) term values. The scalar reward is exactly the weighted
/// sum in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    /// exp(-(v_x - v_cmd)²/σ_v); forward velocity only in the planar model.
    pub track_xy: f64,
    /// exp(-ω²/σ_ω); the planar stand-in tracks a zero pitch-rate command.
    pub track_yaw: f64,
    /// v_z².
    pub z_vel: f64,
    /// ω² (pitch rate).
    pub roll_pitch_vel: f64,
    /// 1 if base or any knee touches terrain.
    pub collision: f64,
    /// Σ τ² over joints (mean applied torque per control step).
    pub torque: f64,
    /// |a_t - a_{t-1}|².
    pub action_rate: f64,
    /// Σ per-foot air time credited at new contact.
    pub air_time: f64,
    /// |q - q_default|².
    pub joint_err: f64,
}

impl RewardTerms {
    pub fn values(&self) -> [f64; 9] {
        [
            self.track_xy,
            self.track_yaw,
            self.z_vel,
            self.roll_pitch_vel,
            self.collision,
            self.torque,
            self.action_rate,
            self.air_time,
            self.joint_err,
        ]
    }

    /// Weighted total; the step reward is exactly this sum.
    pub fn total(&self) -> f64 {
        self.values()
            .iter()
            .zip(REWARD_WEIGHTS.iter())
            .map(|(t, w)| w * t)
            .sum()
    }
}

/// Reward for the transition prev → new under `action`. A pure function of
/// its arguments so tests can recompute it independently from recorded
/// states.
pub fn compute_reward(prev: &SimState, new: &SimState, action: &[f64]) -> (f64, RewardTerms) {
    let v_err = new.vx - new.command;
    let track_xy = (-(v_err * v_err) / SIGMA_V).exp();
    let track_yaw = (-(new.pitch_rate * new.pitch_rate) / SIGMA_W).exp();
    let z_vel = new.vz * new.vz;
    let roll_pitch_vel = new.pitch_rate * new.pitch_rate;
    let collision = if new.collision { 1.0 } else { 0.0 };
    let torque: f64 = new.applied_torque.iter().map(|t| t * t).sum();
    let action_rate: f64 = action
        .iter()
        .zip(prev.prev_action.iter())
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    // Air time credited on touch-down: the foot was airborne, now it is not.
    let mut air_time = 0.0;
    for leg in 0..new.contact.len() {
        if new.contact[leg] && !prev.contact[leg] {
            air_time += prev.air_time[leg] + CONTROL_DT;
        }
    }
    let j = new.q_default.len();
    let joint_err: f64 = new
        .q
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let d = q - new.q_default[i % j];
            d * d
        })
        .sum();

    let terms = RewardTerms {
        track_xy,
        track_yaw,
        z_vel,
        roll_pitch_vel,
        collision,
        torque,
        action_rate,
        air_time,
        joint_err,
    };
    (terms.total(), terms)
}
