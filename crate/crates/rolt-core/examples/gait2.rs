use rolt_core::corrupt::CorruptionSpec;
use rolt_core::harness::{eval_episode, EvalCondition};
use rolt_core::model::{ModelConfig, Policy, Variant};
use rolt_core::ppo::ObsNormalizer;
use rolt_core::sim::{Env, PerturbationSpec, RobotSpec, ScanConfig, Terrain, CONTROL_DT};

fn gait_trial(spec: RobotSpec) -> (f64, bool) {
    let mut env = Env::new(spec, Terrain::flat(), ScanConfig::default(), 10).unwrap();
    env.reset(PerturbationSpec::None, 0.75, 0).unwrap();
    let x0 = env.state.base_x;
    let (ah, ac, f) = (0.4, 1.0, 2.5);
    let mut fell = false;
    for k in 0..1000 {
        let t = k as f64 * CONTROL_DT;
        let mut action = vec![0.0; 8];
        for leg in 0..4 {
            let phase = if leg % 2 == 0 { 0.0 } else { std::f64::consts::PI };
            let s = (2.0 * std::f64::consts::PI * f * t + phase).sin();
            let c = (2.0 * std::f64::consts::PI * f * t + phase).cos();
            action[leg * 2] = ah * s;
            action[leg * 2 + 1] = -ac * c.max(0.0);
        }
        let r = env.step(&action).unwrap();
        if r.done { fell = r.fall; break; }
    }
    (env.state.base_x - x0, fell)
}

fn main() {
    let mcfg = ModelConfig {
        variant: Variant::Rolt,
        hidden_dim: 24, heads: 4, ffn_dim: 48,
        patch_rows: 2, patch_cols: 2, map_rows: 4, map_cols: 8, history: 5,
        ..Default::default()
    };
    let scan = ScanConfig { rows: 4, cols: 8, spacing: 0.12 };
    let norm = ObsNormalizer::new(2);
    for &(kp, kd, mass, inertia) in &[
        (60.0, 2.0, 8.0, 0.6),
        (60.0, 1.2, 12.0, 0.4),
        (60.0, 1.5, 12.0, 0.5),
        (50.0, 1.2, 12.0, 0.4),
        (45.0, 1.0, 10.0, 0.35),
        (60.0, 1.0, 10.0, 0.3),
    ] {
        let mut spec = RobotSpec::quadruped();
        spec.kp = kp; spec.kd = kd; spec.base_mass = mass; spec.base_inertia = inertia;
        spec.reset_jitter = 0.0;
        let (gd, gf) = gait_trial(spec.clone());
        spec.reset_jitter = 0.05;
        let cond = EvalCondition {
            terrain: Terrain::flat(),
            perturbation: PerturbationSpec::None,
            corruption: CorruptionSpec::none(),
            command: 0.75,
        };
        let mut rnd = String::new();
        for seed in 0..3 {
            let policy = Policy::new(mcfg.clone(), seed).unwrap();
            let out = eval_episode(&policy, &norm, &spec, scan, &cond, seed).unwrap();
            rnd.push_str(&format!(" s{seed}:d={:.2},f={:.1}", out.distance, out.fall_time));
        }
        println!("kp={kp} kd={kd} m={mass} I={inertia}: gait {gd:+.2}m fell={gf} | random{rnd}");
    }
}
