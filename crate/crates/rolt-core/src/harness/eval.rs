//! Single-episode evaluation: eval-mode policy (no dropout, all PEs, mean
//! action), frozen normalizer, optional observation corruption, 20 s cap.

use crate::corrupt::{corrupted_scandots, CorruptionSpec};
use crate::error::Result;
use crate::model::Policy;
use crate::obs::ElevationMap;
use crate::ppo::ObsNormalizer;
use crate::sim::{Env, PerturbationSpec, RobotSpec, ScanConfig, Terrain, EPISODE_SECONDS};

#[derive(Debug, Clone)]
pub struct EvalCondition {
    pub terrain: Terrain,
    pub perturbation: PerturbationSpec,
    pub corruption: CorruptionSpec,
    pub command: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    /// Forward distance walked, meters, clamped at 0.
    pub distance: f64,
    /// First-fall time in seconds, or 20.0 if the robot never fell.
    pub fall_time: f64,
    pub episode_return: f64,
}

/// Run one deterministic evaluation episode. The seed drives the reset
/// jitter and the corruption stream only; the policy itself acts through its
/// eval-mode mean.
pub fn eval_episode(
    policy: &Policy,
    normalizer: &ObsNormalizer,
    robot: &RobotSpec,
    scan: ScanConfig,
    condition: &EvalCondition,
    seed: u64,
) -> Result<EvalOutcome> {
    condition.corruption.validate(policy.cfg.patches())?;
    // Evaluation starts from rest regardless of training-time velocity jitter.
    let mut robot = robot.clone();
    robot.reset_vel_jitter = 0.0;
    let mut env = Env::new(robot, condition.terrain, scan, policy.cfg.history)?;
    let (mut obs, _) = env.reset(condition.perturbation, condition.command, seed)?;
    let start_x = env.state.base_x;
    let mut episode_return = 0.0;
    let mut fall_time = EPISODE_SECONDS;
    let grid = (policy.cfg.patch_rows, policy.cfg.patch_cols);

    let mut step_index: u64 = 0;
    loop {
        let map = eval_map(&env, &condition.corruption, grid, seed, step_index)?;
        let norm_obs = normalizer.normalize(&obs);
        let out = policy.eval_forward(&norm_obs, &map);
        let res = env.step(&out.action_mean)?;
        episode_return += res.reward;
        step_index += 1;
        if res.done {
            if let Some(t) = res.fall_time {
                fall_time = t;
            }
            break;
        }
        obs = res.obs;
    }

    Ok(EvalOutcome {
        distance: (env.state.base_x - start_x).max(0.0),
        fall_time,
        episode_return,
    })
}

fn eval_map(
    env: &Env,
    corruption: &CorruptionSpec,
    patch_grid: (usize, usize),
    episode_seed: u64,
    step_index: u64,
) -> Result<ElevationMap> {
    corrupted_scandots(
        corruption,
        episode_seed,
        step_index,
        env.state.base_x,
        env.state.base_z,
        &env.terrain,
        &env.scan,
        patch_grid,
    )
}
