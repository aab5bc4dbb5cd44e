//! Generalized advantage estimation over an env-major rollout buffer.

use super::{PpoConfig, RolloutBuffer};

/// Â_t = Σ_k (γλ)^k δ_{t+k} with δ_t = r_t + γ·V_{t+1}·(1−done_t) − V_t,
/// computed backward per env; returns = Â + V. Fills `buffer.advantages` and
/// `buffer.returns` (raw, unnormalized).
pub fn compute_gae(buffer: &mut RolloutBuffer, cfg: &PpoConfig) {
    let n = buffer.len();
    buffer.advantages = vec![0.0; n];
    buffer.returns = vec![0.0; n];
    for env in 0..buffer.envs {
        let mut adv_next = 0.0;
        for t in (0..buffer.horizon).rev() {
            let i = buffer.index(env, t);
            let tr = &buffer.transitions[i];
            let not_done = if tr.done { 0.0 } else { 1.0 };
            let v_next = if t + 1 < buffer.horizon {
                buffer.transitions[buffer.index(env, t + 1)].value
            } else {
                buffer.bootstrap[env]
            };
            let delta = tr.reward + cfg.gamma * v_next * not_done - tr.value;
            let adv = delta + cfg.gamma * cfg.lam * not_done * adv_next;
            buffer.advantages[i] = adv;
            buffer.returns[i] = adv + tr.value;
            adv_next = adv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DropoutMaskRecord;
    use crate::obs::{ElevationMap, ProprioObs};
    use crate::ppo::Transition;
    use crate::rng::{derive, stream};
    use rand::Rng;

    fn dummy_transition(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            obs: ProprioObs { leg_hist: vec![], imu: [0.0; 5], command: 0.0, prev_action: vec![] },
            map: ElevationMap::new(1, 1, 0.1, vec![0.0]),
            action: vec![],
            log_prob: 0.0,
            value,
            reward,
            done,
            record: DropoutMaskRecord::eval(),
        }
    }

    fn buffer_from(rows: &[(f64, f64, bool)], bootstrap: f64) -> RolloutBuffer {
        RolloutBuffer {
            envs: 1,
            horizon: rows.len(),
            transitions: rows.iter().map(|&(r, v, d)| dummy_transition(r, v, d)).collect(),
            bootstrap: vec![bootstrap],
            advantages: vec![],
            returns: vec![],
            episode_returns: vec![],
            episode_lengths: vec![],
        }
    }

    #[test]
    fn single_done_step_is_reward_minus_value() {
        let mut b = buffer_from(&[(2.5, 0.7, true)], 99.0);
        let cfg = PpoConfig::default();
        compute_gae(&mut b, &cfg);
        assert!((b.advantages[0] - (2.5 - 0.7)).abs() < 1e-15);
        assert!((b.returns[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_gives_td_residuals() {
        let rows = [(1.0, 0.5, false), (0.3, -0.2, false), (2.0, 1.0, false)];
        let mut b = buffer_from(&rows, 0.8);
        // λ = 0: Â_t = δ_t exactly (compute_gae itself does not gate on the
        // config validator).
        let cfg = PpoConfig { lam: 0.0, ..Default::default() };
        compute_gae(&mut b, &cfg);
        let g = 0.99;
        let values_next = [-0.2, 1.0, 0.8];
        for t in 0..3 {
            let delta = rows[t].0 + g * values_next[t] - rows[t].1;
            assert!((b.advantages[t] - delta).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn matches_brute_force_double_loop() {
        let mut rng = derive(3, &[stream::TEST, 40]);
        let rows: Vec<(f64, f64, bool)> = (0..5)
            .map(|i| (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>(), i == 2))
            .collect();
        let bootstrap = 0.4;
        let mut b = buffer_from(&rows, bootstrap);
        let cfg = PpoConfig::default();
        compute_gae(&mut b, &cfg);

        // Brute force: Â_t = Σ_k (γλ)^k δ_{t+k}, truncating at dones.
        let (g, l) = (cfg.gamma, cfg.lam);
        let value = |t: usize| -> f64 {
            if t < rows.len() {
                rows[t].1
            } else {
                bootstrap
            }
        };
        for t in 0..rows.len() {
            let mut acc = 0.0;
            let mut coef = 1.0;
            for k in t..rows.len() {
                let not_done = if rows[k].2 { 0.0 } else { 1.0 };
                let delta = rows[k].0 + g * value(k + 1) * not_done - rows[k].1;
                acc += coef * delta;
                if not_done == 0.0 {
                    break;
                }
                coef *= g * l;
            }
            assert!((b.advantages[t] - acc).abs() < 1e-12, "t={t}: {} vs {acc}", b.advantages[t]);
        }
    }

    #[test]
    fn reward_scaling_scales_advantages_exactly() {
        // With zero values the advantage is linear in rewards; scaling by 2
        // (a power of two) must scale advantages bitwise-exactly.
        let rows: Vec<(f64, f64, bool)> = vec![(0.3, 0.0, false), (-0.7, 0.0, false), (1.1, 0.0, true), (0.5, 0.0, false)];
        let cfg = PpoConfig::default();
        let mut a = buffer_from(&rows, 0.0);
        compute_gae(&mut a, &cfg);
        let scaled: Vec<(f64, f64, bool)> = rows.iter().map(|&(r, v, d)| (2.0 * r, v, d)).collect();
        let mut b = buffer_from(&scaled, 0.0);
        compute_gae(&mut b, &cfg);
        for (x, y) in a.advantages.iter().zip(b.advantages.iter()) {
            assert_eq!((2.0 * x).to_bits(), y.to_bits());
        }
        // Jointly scaling rewards and values scales advantages too.
        let rows2: Vec<(f64, f64, bool)> = vec![(0.3, 0.2, false), (-0.7, -0.1, false), (1.1, 0.6, true)];
        let mut c = buffer_from(&rows2, 0.25);
        compute_gae(&mut c, &cfg);
        let rows2s: Vec<(f64, f64, bool)> = rows2.iter().map(|&(r, v, d)| (2.0 * r, 2.0 * v, d)).collect();
        let mut d = buffer_from(&rows2s, 0.5);
        compute_gae(&mut d, &cfg);
        for (x, y) in c.advantages.iter().zip(d.advantages.iter()) {
            assert_eq!((2.0 * x).to_bits(), y.to_bits());
        }
    }
}
