use rolt_core::harness::{eval_episode, EvalCondition};
use rolt_core::corrupt::CorruptionSpec;
use rolt_core::model::{ModelConfig, Policy, Variant};
use rolt_core::ppo::{train_loop, EnvPool, EpisodeSampler, ObsNormalizer, PpoConfig};
use rolt_core::sim::{PerturbationSpec, RobotSpec, ScanConfig, Terrain};
use std::time::Instant;

fn main() {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mcfg = ModelConfig {
        variant: Variant::Rolt,
        hidden_dim: 24,
        heads: 4,
        ffn_dim: 48,
        patch_rows: 2,
        patch_cols: 2,
        map_rows: 4,
        map_cols: 8,
        history: 5,
        ..Default::default()
    };
    let scan = ScanConfig { rows: 4, cols: 8, spacing: 0.12 };
    let robot = RobotSpec::quadruped();
    let cfg = PpoConfig {
        envs: 64,
        horizon: 48,
        epochs: 3,
        minibatches: 4,
        iterations,
        learning_rate: 1e-3,
        entropy_coef: 0.03,
        value_coef: 0.25,
        grad_clip: 2.0,
        ..Default::default()
    };
    let mut policy = Policy::new(mcfg.clone(), 0).unwrap();
    println!("params: {}", policy.param_count());
    let sampler = EpisodeSampler {
        terrains: vec![Terrain::flat()],
        faults: vec![],
        command_range: (0.3, 1.0),
        push_interval: 50,
        push_vel: 0.8,
    };
    let mut train_robot = robot.clone();
    train_robot.reset_vel_jitter = 0.5;
    train_robot.reset_jitter = 0.08;
    let mut pool = EnvPool::new(&train_robot, scan, mcfg.history, sampler, cfg.envs, 0).unwrap();
    let t0 = Instant::now();
    let mut trained_norm = ObsNormalizer::new(2);
    let summary = train_loop(&mut policy, &mut pool, &cfg, 0, |log, p, norm| {
        trained_norm = norm.clone();
        if log.iteration % 50 == 0 {
            let cond = EvalCondition {
                terrain: Terrain::flat(),
                perturbation: PerturbationSpec::None,
                corruption: CorruptionSpec::none(),
                command: 0.75,
            };
            let out = eval_episode(p, norm, &RobotSpec::quadruped(), ScanConfig { rows: 4, cols: 8, spacing: 0.12 }, &cond, 0).unwrap();
            println!("    [iter {}] eval distance {:.2} m fall {:.1}s ret {:.1}", log.iteration, out.distance, out.fall_time, out.episode_return);
        }
        if log.iteration % 10 == 0 || log.iteration <= 3 {
            println!(
                "iter {:3}  ret {:>8.2}  eps {:3}  len {:>6.1}  ratio_dev {:.2e}  t {:.2}s",
                log.iteration,
                log.mean_return.unwrap_or(f64::NAN),
                log.episodes,
                log.mean_episode_length.unwrap_or(f64::NAN),
                log.pre_ratio_max_dev,
                log.wall_time_s
            );
        }
        Ok(())
    })
    .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "total {:.1}s ({:.2} s/iter); first {:?} final {:?}",
        dt,
        dt / iterations as f64,
        summary.first_iteration_return,
        summary.final_window_return
    );
    // eval with the trained normalizer
    let norm = trained_norm;
    let cond = EvalCondition {
        terrain: Terrain::flat(),
        perturbation: PerturbationSpec::None,
        corruption: CorruptionSpec::none(),
        command: 0.75,
    };
    let out = eval_episode(&policy, &norm, &robot, scan, &cond, 0).unwrap();
    println!("trained eval: distance {:.2} fall {:.2} ret {:.1}", out.distance, out.fall_time, out.episode_return);
}
