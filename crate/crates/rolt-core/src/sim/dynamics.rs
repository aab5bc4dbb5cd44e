//! Reset and step dynamics for the planar walker.

use super::reward::compute_reward;
use super::scandots::sample_scandots;
use super::{
    PerturbationSpec, RobotSpec, ScanConfig, SimState, StepResult, Terrain, BASE_CLEARANCE,
    CONTACT_C, CONTACT_K, CONTROL_DT, EPISODE_STEPS, FALL_HEIGHT_FRAC, FALL_PITCH, FRICTION_C,
    FRICTION_K, FRICTION_MU, GRAVITY, PHYSICS_DT, SUBSTEPS,
};
use crate::error::{Result, RoltError};
use crate::obs::{ElevationMap, ProprioObs};
use crate::rng::{derive, stream};
use rand::Rng;

/// Planar 2-vector helpers.
#[derive(Debug, Clone, Copy)]
struct V2 {
    x: f64,
    z: f64,
}

impl V2 {
    fn rot(self, pitch: f64) -> V2 {
        let (s, c) = pitch.sin_cos();
        V2 { x: c * self.x - s * self.z, z: s * self.x + c * self.z }
    }

    fn perp(self) -> V2 {
        V2 { x: -self.z, z: self.x }
    }
}

/// One environment instance: spec + terrain + scan grid + state. Instances
/// are independent and single-threaded; run N of them in parallel with
/// disjoint rng streams.
#[derive(Debug, Clone)]
pub struct Env {
    pub spec: RobotSpec,
    pub terrain: Terrain,
    pub scan: ScanConfig,
    /// Observation history length (steps per leg ring buffer).
    pub history: usize,
    pub state: SimState,
}

impl Env {
    pub fn new(spec: RobotSpec, terrain: Terrain, scan: ScanConfig, history: usize) -> Result<Env> {
        spec.validate()?;
        if history < 1 {
            return Err(RoltError::Config("history must be >= 1".into()));
        }
        let state = SimState {
            base_x: 0.0,
            base_z: spec.standing_height(),
            pitch: 0.0,
            vx: 0.0,
            vz: 0.0,
            pitch_rate: 0.0,
            q: vec![0.0; spec.dof()],
            q_default: spec.q_default.clone(),
            qd: vec![0.0; spec.dof()],
            contact: vec![false; spec.legs],
            foot_anchor: vec![None; spec.legs],
            air_time: vec![0.0; spec.legs],
            prev_action: vec![0.0; spec.dof()],
            prev_prev_action: vec![0.0; spec.dof()],
            leg_hist: vec![Vec::new(); spec.legs],
            steps: 0,
            time: 0.0,
            command: 0.0,
            applied_torque: vec![0.0; spec.dof()],
            collision: false,
            fallen: false,
            fall_time: None,
            perturbation: PerturbationSpec::None,
        };
        Ok(Env { spec, terrain, scan, history, state })
    }

    /// Place the robot at the episode start: joints at q_default plus seeded
    /// jitter (lock overrides its joint), base at the terrain-consistent
    /// height where the lowest foot just touches. Deterministic given seed.
    pub fn reset(
        &mut self,
        perturbation: PerturbationSpec,
        command: f64,
        seed: u64,
    ) -> Result<(ProprioObs, ElevationMap)> {
        perturbation.validate(&self.spec)?;
        let spec = &self.spec;
        let mut rng = derive(seed, &[stream::ENV, 0x5e5e7]);
        let mut q = vec![0.0; spec.dof()];
        for leg in 0..spec.legs {
            for j in 0..spec.joints_per_leg {
                let jitter = if spec.reset_jitter > 0.0 {
                    (rng.gen::<f64>() * 2.0 - 1.0) * spec.reset_jitter
                } else {
                    0.0
                };
                q[leg * spec.joints_per_leg + j] = spec.q_default[j] + jitter;
            }
        }
        if let PerturbationSpec::Lock { leg, joint, angle } = perturbation {
            q[leg * spec.joints_per_leg + joint] = angle;
        }

        // Base height: highest requirement over feet so nothing starts below
        // ground.
        let mut base_z = f64::NEG_INFINITY;
        for leg in 0..spec.legs {
            let rel = foot_rel_base(spec, &q, 0.0, leg);
            let foot_x = rel.x; // base_x = 0
            base_z = base_z.max(self.terrain.height(foot_x) - rel.z);
        }

        let vx0 = if spec.reset_vel_jitter > 0.0 {
            (rng.gen::<f64>() * 2.0 - 1.0) * spec.reset_vel_jitter
        } else {
            0.0
        };
        let st = &mut self.state;
        st.base_x = 0.0;
        st.base_z = base_z;
        st.pitch = 0.0;
        st.vx = vx0;
        st.vz = 0.0;
        st.pitch_rate = 0.0;
        st.q = q;
        st.q_default = spec.q_default.clone();
        st.qd = vec![0.0; spec.dof()];
        st.air_time = vec![0.0; spec.legs];
        st.prev_action = vec![0.0; spec.dof()];
        st.prev_prev_action = vec![0.0; spec.dof()];
        st.steps = 0;
        st.time = 0.0;
        st.command = command;
        st.applied_torque = vec![0.0; spec.dof()];
        st.collision = false;
        st.fallen = false;
        st.fall_time = None;
        st.perturbation = perturbation;

        // Contacts and friction anchors at the resting pose.
        let mut contact = vec![false; spec.legs];
        let mut anchors = vec![None; spec.legs];
        for leg in 0..spec.legs {
            let foot = foot_world(spec, &self.state, leg);
            if foot.z <= self.terrain.height(foot.x) {
                contact[leg] = true;
                anchors[leg] = Some(foot.x);
            }
        }
        self.state.contact = contact;
        self.state.foot_anchor = anchors;

        // Ring buffers padded with reset values: [q, 0 velocity, 0 action].
        let j = self.spec.joints_per_leg;
        let block = 3 * j;
        for leg in 0..self.spec.legs {
            let mut hist = Vec::with_capacity(self.history * block);
            for _ in 0..self.history {
                for jj in 0..j {
                    hist.push(self.state.q[leg * j + jj]);
                }
                hist.extend(std::iter::repeat(0.0).take(2 * j));
            }
            self.state.leg_hist[leg] = hist;
        }

        Ok((self.observe(), self.scandots()))
    }

    /// One 50 Hz control step: PD torques toward q_default + scale·action,
    /// four physics substeps, contact/air-time/history bookkeeping, fall
    /// detection, and the reward decomposition.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.dof() {
            return Err(RoltError::Input(format!(
                "action length {} does not match {} joints",
                action.len(),
                self.spec.dof()
            )));
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(RoltError::Input("non-finite action".into()));
        }

        let prev = self.state.clone();
        let spec = self.spec.clone();
        let nj = spec.dof();
        let j = spec.joints_per_leg;

        let (locked, disabled) = match self.state.perturbation {
            PerturbationSpec::Lock { leg, joint, angle } => {
                (Some((leg * j + joint, angle)), None)
            }
            PerturbationSpec::Disable { leg, joint } => (None, Some(leg * j + joint)),
            PerturbationSpec::None => (None, None),
        };

        let mut torque_accum = vec![0.0; nj];
        for _ in 0..SUBSTEPS {
            let st = &self.state;
            // PD actuator torques toward the commanded targets.
            let mut tau = vec![0.0; nj];
            for i in 0..nj {
                let target = spec.q_default[i % j] + spec.action_scale * action[i];
                let t = spec.kp * (target - st.q[i]) - spec.kd * st.qd[i];
                tau[i] = t.clamp(-spec.torque_limit, spec.torque_limit);
            }
            if let Some(d) = disabled {
                tau[d] = 0.0;
            }
            if let Some((li, _)) = locked {
                tau[li] = 0.0;
            }
            for (acc, t) in torque_accum.iter_mut().zip(tau.iter()) {
                *acc += t;
            }

            // Foot contact forces and their joint-space reactions.
            let mut force = V2 { x: 0.0, z: -spec.base_mass * GRAVITY };
            let mut torque_base = 0.0;
            let mut tau_contact = vec![0.0; nj];
            let mut new_anchor: Vec<Option<f64>> = vec![None; spec.legs];
            for leg in 0..spec.legs {
                let foot = foot_world(&spec, st, leg);
                let ground = self.terrain.height(foot.x);
                let pen = ground - foot.z;
                if pen <= 0.0 {
                    continue;
                }
                let vf = foot_velocity(&spec, st, leg);
                let fn_ = (CONTACT_K * pen - CONTACT_C * vf.z).max(0.0);
                // Stiction: tangential spring from the touchdown anchor,
                // Coulomb-capped; the anchor slides when the cap engages.
                let anchor = st.foot_anchor[leg].unwrap_or(foot.x);
                let cap = FRICTION_MU * fn_;
                let ft_raw = -FRICTION_K * (foot.x - anchor) - FRICTION_C * vf.x;
                let ft = ft_raw.clamp(-cap, cap);
                new_anchor[leg] = if ft_raw.abs() > cap {
                    Some(foot.x + ft / FRICTION_K)
                } else {
                    Some(anchor)
                };
                let f = V2 { x: ft, z: fn_ };
                force.x += f.x;
                force.z += f.z;
                let r = V2 { x: foot.x - st.base_x, z: foot.z - st.base_z };
                torque_base += r.x * f.z - r.z * f.x;
                // Jacobian-transpose mapping into the leg's joints.
                let (jc0, jc1) = foot_jacobian_world(&spec, st, leg);
                tau_contact[leg * j] = jc0.x * f.x + jc0.z * f.z;
                tau_contact[leg * j + 1] = jc1.x * f.x + jc1.z * f.z;
            }

            // Integrate joints (velocity first, trapezoidal position).
            let st = &mut self.state;
            st.foot_anchor = new_anchor;
            for i in 0..nj {
                if let Some((li, angle)) = locked {
                    if i == li {
                        st.q[i] = angle;
                        st.qd[i] = 0.0;
                        continue;
                    }
                }
                let qdd = (tau[i] + tau_contact[i] - spec.joint_damping * st.qd[i]) / spec.joint_inertia;
                let qd_new = st.qd[i] + PHYSICS_DT * qdd;
                st.q[i] += PHYSICS_DT * (st.qd[i] + qd_new) * 0.5;
                st.qd[i] = qd_new;
            }

            // Integrate the base.
            let ax = force.x / spec.base_mass;
            let az = force.z / spec.base_mass;
            let ap = torque_base / spec.base_inertia;
            let vx_new = st.vx + PHYSICS_DT * ax;
            let vz_new = st.vz + PHYSICS_DT * az;
            let pr_new = st.pitch_rate + PHYSICS_DT * ap;
            st.base_x += PHYSICS_DT * (st.vx + vx_new) * 0.5;
            st.base_z += PHYSICS_DT * (st.vz + vz_new) * 0.5;
            st.pitch += PHYSICS_DT * (st.pitch_rate + pr_new) * 0.5;
            st.vx = vx_new;
            st.vz = vz_new;
            st.pitch_rate = pr_new;
        }

        // Post-substep bookkeeping.
        for (acc, t) in torque_accum.iter_mut().zip(std::iter::repeat(())) {
            *acc /= SUBSTEPS as f64;
            let _ = t;
        }
        self.state.applied_torque = torque_accum;

        let mut contact = vec![false; spec.legs];
        let mut collision = false;
        for (leg, c) in contact.iter_mut().enumerate() {
            let foot = foot_world(&spec, &self.state, leg);
            *c = foot.z <= self.terrain.height(foot.x);
            let knee = knee_world(&spec, &self.state, leg);
            if knee.z <= self.terrain.height(knee.x) {
                collision = true;
            }
        }
        if self.state.base_z - self.terrain.height(self.state.base_x) < BASE_CLEARANCE {
            collision = true;
        }
        self.state.collision = collision;
        for leg in 0..spec.legs {
            self.state.air_time[leg] = if contact[leg] {
                0.0
            } else {
                prev.air_time[leg] + CONTROL_DT
            };
        }
        self.state.contact = contact;

        self.state.prev_prev_action = prev.prev_action.clone();
        self.state.prev_action = action.to_vec();
        self.state.steps += 1;
        self.state.time = self.state.steps as f64 * CONTROL_DT;

        // History push: drop the oldest block, append post-step readings.
        let block = 3 * j;
        for leg in 0..spec.legs {
            let hist = &mut self.state.leg_hist[leg];
            hist.copy_within(block.., 0);
            let base = hist.len() - block;
            for jj in 0..j {
                hist[base + jj] = self.state.q[leg * j + jj];
                hist[base + j + jj] = self.state.qd[leg * j + jj];
                hist[base + 2 * j + jj] = action[leg * j + jj];
            }
        }

        // Fall detection.
        let height_above = self.state.base_z - self.terrain.height(self.state.base_x);
        let fall_now = !self.state.fallen
            && (height_above < FALL_HEIGHT_FRAC * spec.standing_height()
                || self.state.pitch.abs() > FALL_PITCH);
        if fall_now {
            self.state.fallen = true;
            self.state.fall_time = Some(self.state.time);
        }

        let (reward, terms) = compute_reward(&prev, &self.state, action);
        let done = self.state.fallen || self.state.steps >= EPISODE_STEPS;

        Ok(StepResult {
            obs: self.observe(),
            map: self.scandots(),
            reward,
            terms,
            done,
            fall: self.state.fallen,
            fall_time: self.state.fall_time,
        })
    }

    /// Build the proprioceptive observation from the current state.
    pub fn observe(&self) -> ProprioObs {
        let st = &self.state;
        let (s, c) = st.pitch.sin_cos();
        // Body-frame linear velocity and gravity projection.
        let vx_b = c * st.vx + s * st.vz;
        let vz_b = -s * st.vx + c * st.vz;
        ProprioObs {
            leg_hist: st.leg_hist.clone(),
            imu: [vx_b, vz_b, st.pitch_rate, -s, -c],
            command: st.command,
            prev_action: st.prev_action.clone(),
        }
    }

    pub fn scandots(&self) -> ElevationMap {
        sample_scandots(self.state.base_x, self.state.base_z, &self.terrain, &self.scan)
    }
}

/// Foot position relative to the base, in the body frame rotated to world
/// (i.e. including pitch but not base translation).
fn foot_rel_base(spec: &RobotSpec, q: &[f64], pitch: f64, leg: usize) -> V2 {
    let j = spec.joints_per_leg;
    let q0 = q[leg * j];
    let q1 = q[leg * j + 1];
    let body = V2 {
        x: spec.attach_x[leg] + spec.thigh_len * q0.sin() + spec.shank_len * (q0 + q1).sin(),
        z: -(spec.thigh_len * q0.cos() + spec.shank_len * (q0 + q1).cos()),
    };
    body.rot(pitch)
}

fn foot_world(spec: &RobotSpec, st: &SimState, leg: usize) -> V2 {
    let rel = foot_rel_base(spec, &st.q, st.pitch, leg);
    V2 { x: st.base_x + rel.x, z: st.base_z + rel.z }
}

fn knee_world(spec: &RobotSpec, st: &SimState, leg: usize) -> V2 {
    let j = spec.joints_per_leg;
    let q0 = st.q[leg * j];
    let body = V2 {
        x: spec.attach_x[leg] + spec.thigh_len * q0.sin(),
        z: -spec.thigh_len * q0.cos(),
    };
    let rel = body.rot(st.pitch);
    V2 { x: st.base_x + rel.x, z: st.base_z + rel.z }
}

/// World-frame foot Jacobian columns ∂foot/∂q0 and ∂foot/∂q1.
fn foot_jacobian_world(spec: &RobotSpec, st: &SimState, leg: usize) -> (V2, V2) {
    let j = spec.joints_per_leg;
    let q0 = st.q[leg * j];
    let q1 = st.q[leg * j + 1];
    let c0 = V2 {
        x: spec.thigh_len * q0.cos() + spec.shank_len * (q0 + q1).cos(),
        z: spec.thigh_len * q0.sin() + spec.shank_len * (q0 + q1).sin(),
    };
    let c1 = V2 {
        x: spec.shank_len * (q0 + q1).cos(),
        z: spec.shank_len * (q0 + q1).sin(),
    };
    (c0.rot(st.pitch), c1.rot(st.pitch))
}

/// World-frame foot velocity: base velocity + pitch spin + joint motion.
fn foot_velocity(spec: &RobotSpec, st: &SimState, leg: usize) -> V2 {
    let rel = foot_rel_base(spec, &st.q, st.pitch, leg);
    let spin = rel.perp();
    let (jc0, jc1) = foot_jacobian_world(spec, st, leg);
    let j = spec.joints_per_leg;
    let qd0 = st.qd[leg * j];
    let qd1 = st.qd[leg * j + 1];
    V2 {
        x: st.vx + st.pitch_rate * spin.x + jc0.x * qd0 + jc1.x * qd1,
        z: st.vz + st.pitch_rate * spin.z + jc0.z * qd0 + jc1.z * qd1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TerrainKind;

    fn quad_env() -> Env {
        let mut spec = RobotSpec::quadruped();
        spec.reset_jitter = 0.0;
        Env::new(spec, Terrain::flat(), ScanConfig::default(), 10).unwrap()
    }

    #[test]
    fn reset_is_bitwise_deterministic() {
        let mut spec = RobotSpec::quadruped();
        spec.reset_jitter = 0.05;
        let mut a = Env::new(spec.clone(), Terrain::flat(), ScanConfig::default(), 10).unwrap();
        let mut b = Env::new(spec, Terrain::flat(), ScanConfig::default(), 10).unwrap();
        a.reset(PerturbationSpec::None, 0.5, 42).unwrap();
        b.reset(PerturbationSpec::None, 0.5, 42).unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn reset_height_matches_forward_kinematics() {
        // Hand FK at q_default = [0.4, -0.8], l1 = l2 = 0.2:
        // h = 0.2·cos(0.4) + 0.2·cos(-0.4)
        let mut env = quad_env();
        env.reset(PerturbationSpec::None, 0.0, 0).unwrap();
        let expect = 0.2 * (0.4f64).cos() + 0.2 * (-0.4f64).cos();
        assert!((env.state.base_z - expect).abs() < 1e-12);
        assert!((env.spec.standing_height() - expect).abs() < 1e-12);
    }

    #[test]
    fn reset_lock_sets_angle() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::Lock { leg: 1, joint: 1, angle: -1.2 }, 0.0, 3).unwrap();
        assert_eq!(env.state.q[1 * 2 + 1], -1.2);
    }

    #[test]
    fn standing_robot_settles() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::None, 0.0, 0).unwrap();
        let zero = vec![0.0; env.spec.dof()];
        let mut last = None;
        for _ in 0..100 {
            last = Some(env.step(&zero).unwrap());
        }
        let st = &env.state;
        let speed = (st.vx * st.vx + st.vz * st.vz).sqrt();
        assert!(speed < 0.05, "standing base speed {speed}");
        assert!(!last.unwrap().fall, "standing robot fell");
        assert!(!st.collision, "standing robot reports collision");
    }

    #[test]
    fn disabled_joint_has_zero_applied_torque() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::Disable { leg: 2, joint: 0 }, 0.0, 1).unwrap();
        for k in 0..20 {
            let action: Vec<f64> = (0..env.spec.dof()).map(|i| ((i + k) % 3) as f64 * 0.3 - 0.3).collect();
            env.step(&action).unwrap();
            assert_eq!(env.state.applied_torque[2 * 2], 0.0);
        }
    }

    #[test]
    fn locked_joint_angle_constant() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::Lock { leg: 0, joint: 1, angle: -0.9 }, 0.0, 1).unwrap();
        for _ in 0..50 {
            let action = vec![0.4; env.spec.dof()];
            env.step(&action).unwrap();
            assert_eq!(env.state.q[1], -0.9);
            assert_eq!(env.state.qd[1], 0.0);
        }
    }

    #[test]
    fn step_is_bitwise_deterministic() {
        let mut a = quad_env();
        let mut b = quad_env();
        a.reset(PerturbationSpec::None, 0.6, 9).unwrap();
        b.reset(PerturbationSpec::None, 0.6, 9).unwrap();
        for k in 0..30 {
            let action: Vec<f64> = (0..8).map(|i| ((i * k) as f64 * 0.37).sin() * 0.5).collect();
            let ra = a.step(&action).unwrap();
            let rb = b.step(&action).unwrap();
            assert_eq!(ra.reward.to_bits(), rb.reward.to_bits());
            assert_eq!(a.state, b.state);
        }
    }

    #[test]
    fn non_finite_action_rejected() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::None, 0.0, 0).unwrap();
        let mut action = vec![0.0; env.spec.dof()];
        action[3] = f64::NAN;
        assert!(env.step(&action).is_err());
    }

    #[test]
    fn ballistic_base_matches_projectile_equations() {
        // No torques (kp = kd = 0), no contact (base high above ground):
        // z(t) = z0 + v0 t - g t²/2 within 1e-3 over 0.5 s.
        let mut spec = RobotSpec::quadruped();
        spec.kp = 0.0;
        spec.kd = 0.0;
        spec.reset_jitter = 0.0;
        let mut env = Env::new(spec, Terrain::flat(), ScanConfig::default(), 10).unwrap();
        env.reset(PerturbationSpec::None, 0.0, 0).unwrap();
        env.state.base_z = 10.0;
        env.state.vz = 1.0;
        env.state.vx = 0.5;
        let (z0, x0, vz0, vx0) = (10.0, env.state.base_x, 1.0, 0.5);
        let action = vec![0.0; env.spec.dof()];
        for _ in 0..25 {
            env.step(&action).unwrap();
        }
        let t = 25.0 * CONTROL_DT;
        let expect_z = z0 + vz0 * t - 0.5 * GRAVITY * t * t;
        let expect_x = x0 + vx0 * t;
        assert!((env.state.base_z - expect_z).abs() < 1e-3, "z error {}", (env.state.base_z - expect_z).abs());
        assert!((env.state.base_x - expect_x).abs() < 1e-3);
    }

    #[test]
    fn toppled_robot_falls() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::None, 0.0, 0).unwrap();
        env.state.pitch = 1.3;
        let res = env.step(&vec![0.0; 8]).unwrap();
        assert!(res.fall);
        assert!(res.done);
        let ft = res.fall_time.unwrap();
        assert!(ft > 0.0 && ft <= 20.0);
    }

    #[test]
    fn history_ring_matches_naive_recorder() {
        let mut env = quad_env();
        env.reset(PerturbationSpec::None, 0.3, 7).unwrap();
        let j = env.spec.joints_per_leg;
        let hist_len = env.history;
        let mut naive: Vec<Vec<Vec<f64>>> = vec![Vec::new(); env.spec.legs];
        for k in 0..25 {
            let action: Vec<f64> = (0..8).map(|i| ((i + k) as f64 * 0.21).cos() * 0.4).collect();
            env.step(&action).unwrap();
            for leg in 0..env.spec.legs {
                let mut block = Vec::new();
                for jj in 0..j {
                    block.push(env.state.q[leg * j + jj]);
                }
                for jj in 0..j {
                    block.push(env.state.qd[leg * j + jj]);
                }
                for jj in 0..j {
                    block.push(action[leg * j + jj]);
                }
                naive[leg].push(block);
            }
        }
        for leg in 0..env.spec.legs {
            let tail: Vec<f64> = naive[leg][naive[leg].len() - hist_len..]
                .iter()
                .flatten()
                .copied()
                .collect();
            assert_eq!(env.state.leg_hist[leg], tail);
        }
    }

    #[test]
    fn hexapod_env_runs() {
        let mut spec = RobotSpec::hexapod();
        spec.reset_jitter = 0.0;
        let mut env = Env::new(spec, Terrain::make(TerrainKind::Slope { grade: 0.05 }).unwrap(), ScanConfig::default(), 10).unwrap();
        env.reset(PerturbationSpec::Disable { leg: 5, joint: 1 }, 0.5, 4).unwrap();
        for _ in 0..10 {
            let res = env.step(&vec![0.1; 12]).unwrap();
            assert!(res.obs.is_finite());
            assert!(res.map.is_finite());
        }
    }
}
