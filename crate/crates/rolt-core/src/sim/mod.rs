//! Deterministic planar N-legged walker with PD actuation, heightfield
//! terrains, scandot exteroception, and joint lock/disable fault injection.
//!
//! The model is 2.5D: legs are arrayed along the body axis and move in the
//! sagittal plane. Each leg has two joints (thigh/hip = joint 0, calf =
//! joint 1), massless links, and a point foot. The base is a planar rigid
//! body receiving foot contact forces; joints integrate against a constant
//! reflected inertia and receive contact torques through the leg Jacobian.

mod dynamics;
mod reward;
mod scandots;
mod terrain;

pub use dynamics::Env;
pub use reward::{compute_reward, RewardTerms, REWARD_WEIGHTS, SIGMA_V, SIGMA_W, TERM_NAMES};
pub use scandots::{sample_scandots, scan_x};
pub use terrain::{Terrain, TerrainKind};

use crate::error::{Result, RoltError};
use serde::{Deserialize, Serialize};

pub const CONTROL_HZ: f64 = 50.0;
pub const SUBSTEPS: usize = 4;
pub const CONTROL_DT: f64 = 1.0 / CONTROL_HZ;
pub const PHYSICS_DT: f64 = CONTROL_DT / SUBSTEPS as f64;
pub const EPISODE_SECONDS: f64 = 20.0;
pub const EPISODE_STEPS: u64 = (EPISODE_SECONDS * CONTROL_HZ) as u64;
pub const GRAVITY: f64 = 9.81;

/// Contact model constants: spring-damper normal force with Coulomb-capped
/// viscous tangential friction.
pub const CONTACT_K: f64 = 2.0e4;
pub const CONTACT_C: f64 = 200.0;
pub const FRICTION_MU: f64 = 0.8;
/// Tangential stiction spring anchored at the touchdown point, N/m.
pub const FRICTION_K: f64 = 1.0e4;
pub const FRICTION_C: f64 = 100.0;

/// Fall thresholds: chosen so a standing robot never triggers and a toppled
/// one always does.
pub const FALL_HEIGHT_FRAC: f64 = 0.45;
pub const FALL_PITCH: f64 = 1.0;

/// Base underside clearance below which the body counts as colliding.
pub const BASE_CLEARANCE: f64 = 0.08;

/// Physical description of the walker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    pub legs: usize,
    pub joints_per_leg: usize,
    pub thigh_len: f64,
    pub shank_len: f64,
    pub base_mass: f64,
    pub base_inertia: f64,
    /// Leg attachment x-offsets along the body axis, front to back, meters.
    pub attach_x: Vec<f64>,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    /// Default joint angles per leg: [thigh, calf], radians.
    pub q_default: Vec<f64>,
    pub action_scale: f64,
    /// Reflected joint inertia, kg·m².
    pub joint_inertia: f64,
    /// Viscous joint friction, N·m·s/rad, applied on top of the PD damping.
    pub joint_damping: f64,
    /// Uniform joint-angle jitter applied at reset, radians.
    pub reset_jitter: f64,
    /// Uniform forward-velocity jitter applied at reset, m/s (training
    /// configs use this for state diversity; evaluation starts from rest).
    pub reset_vel_jitter: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        RobotSpec::quadruped()
    }
}

impl RobotSpec {
    pub fn quadruped() -> Self {
        RobotSpec {
            legs: 4,
            joints_per_leg: 2,
            thigh_len: 0.2,
            shank_len: 0.2,
            base_mass: 12.0,
            base_inertia: 0.4,
            attach_x: vec![0.3, 0.1, -0.1, -0.3],
            kp: 60.0,
            kd: 1.2,
            torque_limit: 33.5,
            q_default: vec![0.4, -0.8],
            action_scale: 0.25,
            joint_inertia: 0.08,
            joint_damping: 0.5,
            reset_jitter: 0.05,
            reset_vel_jitter: 0.0,
        }
    }

    pub fn hexapod() -> Self {
        RobotSpec {
            legs: 6,
            base_mass: 16.0,
            base_inertia: 0.7,
            attach_x: vec![0.3, 0.18, 0.06, -0.06, -0.18, -0.3],
            ..RobotSpec::quadruped()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.legs == 4 || self.legs == 6) {
            return Err(RoltError::Config(format!("legs must be 4 or 6, got {}", self.legs)));
        }
        if self.joints_per_leg != 2 {
            return Err(RoltError::Config("joints_per_leg must be 2 (thigh, calf)".into()));
        }
        if self.attach_x.len() != self.legs {
            return Err(RoltError::Config(format!(
                "attach_x has {} entries for {} legs",
                self.attach_x.len(),
                self.legs
            )));
        }
        if self.q_default.len() != self.joints_per_leg {
            return Err(RoltError::Config("q_default must have one entry per joint".into()));
        }
        for (name, v) in [
            ("thigh_len", self.thigh_len),
            ("shank_len", self.shank_len),
            ("base_mass", self.base_mass),
            ("base_inertia", self.base_inertia),
            ("torque_limit", self.torque_limit),
            ("joint_inertia", self.joint_inertia),
        ] {
            if v <= 0.0 {
                return Err(RoltError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.legs * self.joints_per_leg
    }

    /// Base height above ground when standing at q_default.
    pub fn standing_height(&self) -> f64 {
        let q0 = self.q_default[0];
        let q1 = self.q_default[1];
        self.thigh_len * q0.cos() + self.shank_len * (q0 + q1).cos()
    }
}

/// Fault injected for a whole episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    None,
    /// Joint held at a fixed angle with zero velocity for the whole episode.
    Lock { leg: usize, joint: usize, angle: f64 },
    /// Actuator torque forced to zero at every substep.
    Disable { leg: usize, joint: usize },
}

impl PerturbationSpec {
    pub fn validate(&self, spec: &RobotSpec) -> Result<()> {
        let (leg, joint) = match self {
            PerturbationSpec::None => return Ok(()),
            PerturbationSpec::Lock { leg, joint, .. } => (*leg, *joint),
            PerturbationSpec::Disable { leg, joint } => (*leg, *joint),
        };
        if leg >= spec.legs || joint >= spec.joints_per_leg {
            return Err(RoltError::Config(format!(
                "perturbation ({leg},{joint}) out of range for {}x{} robot",
                spec.legs, spec.joints_per_leg
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            PerturbationSpec::None => "healthy".to_string(),
            PerturbationSpec::Lock { leg, joint, .. } => {
                format!("lock_l{leg}_{}", joint_name(*joint))
            }
            PerturbationSpec::Disable { leg, joint } => {
                format!("disable_l{leg}_{}", joint_name(*joint))
            }
        }
    }
}

pub fn joint_name(joint: usize) -> &'static str {
    if joint == 0 {
        "thigh"
    } else {
        "calf"
    }
}

/// Scandot grid configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { rows: 12, cols: 16, spacing: 0.1 }
    }
}

/// Full simulator state. Histories are always full (padded at reset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub base_x: f64,
    pub base_z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
    /// Joint angles, leg-major, length L·J.
    pub q: Vec<f64>,
    /// Default angles per joint-within-leg (copied from the spec at reset);
    /// the joint-error reward reads these.
    pub q_default: Vec<f64>,
    pub qd: Vec<f64>,
    pub contact: Vec<bool>,
    /// Tangential friction anchor per foot: the ground x the foot stuck to,
    /// present while in contact.
    pub foot_anchor: Vec<Option<f64>>,
    /// Per-foot accumulated air time, seconds.
    pub air_time: Vec<f64>,
    /// a_{t-1}: the action applied at the last control step.
    pub prev_action: Vec<f64>,
    /// a_{t-2}.
    pub prev_prev_action: Vec<f64>,
    /// Per-leg observation ring buffers, oldest step first; each step block is
    /// [q (J), q̇ (J), action (J)].
    pub leg_hist: Vec<Vec<f64>>,
    pub steps: u64,
    pub time: f64,
    pub command: f64,
    /// Mean applied actuator torque per joint over the last control step's
    /// substeps (zero for disabled joints by construction).
    pub applied_torque: Vec<f64>,
    pub collision: bool,
    pub fallen: bool,
    pub fall_time: Option<f64>,
    pub perturbation: PerturbationSpec,
}

/// Everything one control step produces.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: crate::obs::ProprioObs,
    pub map: crate::obs::ElevationMap,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    pub fall: bool,
    pub fall_time: Option<f64>,
}
