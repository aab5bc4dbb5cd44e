//! Observation types shared between the simulator and the policy.

use serde::{Deserialize, Serialize};

/// Proprioceptive observation: per-leg history blocks plus base state.
///
/// Each leg's history block is `history × 3J` values laid out step-major,
/// oldest step first, with `[q (J), q̇ (J), prev_action (J)]` per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprioObs {
    pub leg_hist: Vec<Vec<f64>>,
    /// [vx_body, vz_body, pitch_rate, gravity_x_body, gravity_z_body]
    pub imu: [f64; 5],
    /// Commanded forward velocity, m/s.
    pub command: f64,
    /// Previous full action a_{t-1}, length L·J.
    pub prev_action: Vec<f64>,
}

impl ProprioObs {
    pub fn legs(&self) -> usize {
        self.leg_hist.len()
    }

    pub fn is_finite(&self) -> bool {
        self.leg_hist.iter().flatten().all(|v| v.is_finite())
            && self.imu.iter().all(|v| v.is_finite())
            && self.command.is_finite()
            && self.prev_action.iter().all(|v| v.is_finite())
    }
}

/// Height samples around the robot, relative to base height. Row-major H×W;
/// columns run along the forward axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationMap {
    pub rows: usize,
    pub cols: usize,
    /// Grid spacing in meters.
    pub spacing: f64,
    pub heights: Vec<f64>,
}

impl ElevationMap {
    pub fn new(rows: usize, cols: usize, spacing: f64, heights: Vec<f64>) -> Self {
        assert_eq!(heights.len(), rows * cols, "elevation map size mismatch");
        ElevationMap { rows, cols, spacing, heights }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.heights[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.heights.iter().all(|v| v.is_finite())
    }
}
