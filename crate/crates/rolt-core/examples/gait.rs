// Reward accounting: scripted walking vs standing.
use rolt_core::sim::{Env, PerturbationSpec, RobotSpec, ScanConfig, Terrain, CONTROL_DT, REWARD_WEIGHTS, TERM_NAMES};

fn run(label: &str, gait: bool, amp_hip: f64, amp_calf: f64, freq: f64, cmd: f64) {
    let mut spec = RobotSpec::quadruped();
    spec.reset_jitter = 0.0;
    let mut env = Env::new(spec, Terrain::flat(), ScanConfig::default(), 10).unwrap();
    env.reset(PerturbationSpec::None, cmd, 0).unwrap();
    let x0 = env.state.base_x;
    let mut total = 0.0;
    let mut terms = [0.0; 9];
    let mut steps = 0;
    for k in 0..1000 {
        let t = k as f64 * CONTROL_DT;
        let mut action = vec![0.0; 8];
        if gait {
            for leg in 0..4 {
                let phase = if leg % 2 == 0 { 0.0 } else { std::f64::consts::PI };
                let s = (2.0 * std::f64::consts::PI * freq * t + phase).sin();
                let c = (2.0 * std::f64::consts::PI * freq * t + phase).cos();
                action[leg * 2] = amp_hip * s;
                action[leg * 2 + 1] = -amp_calf * c.max(0.0);
            }
        }
        let r = env.step(&action).unwrap();
        total += r.reward;
        for (i, v) in r.terms.values().iter().enumerate() {
            terms[i] += v * REWARD_WEIGHTS[i];
        }
        steps += 1;
        if r.done { break; }
    }
    println!("{label}: dist {:+.2} m, steps {steps}, return {total:.1}", env.state.base_x - x0);
    for (name, v) in TERM_NAMES.iter().zip(terms.iter()) {
        println!("    {name:<22} {v:>9.1}");
    }
}

fn main() {
    run("stand  cmd 0.75", false, 0.0, 0.0, 0.0, 0.75);
    run("gait   cmd 0.75 (A=0.4/1.0 f=2.5)", true, 0.4, 1.0, 2.5, 0.75);
    run("gait   cmd 0.3  (A=0.3/0.8 f=2.0)", true, 0.3, 0.8, 2.0, 0.3);
}
