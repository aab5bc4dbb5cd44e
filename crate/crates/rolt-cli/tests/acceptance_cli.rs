//! Criterion 9: two runs of any CLI command with identical config and seed
//! produce identical metric/report files (excluding timestamps).

use std::path::Path;
use std::process::Command;

fn rolt() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rolt"));
    for (k, _) in std::env::vars() {
        if k.starts_with("ROLT_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

const TINY_CONFIG: &str = r#"
[model]
hidden_dim = 16
heads = 2
ffn_dim = 32
patch_rows = 2
patch_cols = 2
map_rows = 4
map_cols = 8
history = 2

[scan]
rows = 4
cols = 8
spacing = 0.12

[ppo]
envs = 2
horizon = 4
epochs = 1
minibatches = 1
iterations = 2

[eval]
seeds = 2

[noise]
patch_count = 2
offset_scales = [0.0, 0.1]
sigmas = [0.0, 0.05]
"#;

fn run(args: &[&str], cwd: &Path) {
    let out = rolt().args(args).current_dir(cwd).output().expect("spawn rolt");
    assert!(
        out.status.success(),
        "rolt {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Metric logs compare after dropping the wall-time field from each line.
fn metrics_without_walltime(path: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time_s");
            v
        })
        .collect()
}

fn assert_identical(a: &Path, b: &Path, rel: &str) {
    let x = std::fs::read(a.join(rel)).unwrap_or_else(|e| panic!("missing {rel} in {a:?}: {e}"));
    let y = std::fs::read(b.join(rel)).unwrap_or_else(|e| panic!("missing {rel} in {b:?}: {e}"));
    assert_eq!(x, y, "criterion 9 FAIL: {rel} differs between identical runs");
}

#[test]
fn criterion_09_cli_determinism() {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("tiny.toml");
    std::fs::write(&cfg_path, TINY_CONFIG).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    // train twice into separate out dirs
    let (t1, t2) = (root.path().join("t1"), root.path().join("t2"));
    for out in [&t1, &t2] {
        run(
            &["train", "--config", cfg, "--seed", "5", "--out", out.to_str().unwrap(), "--variant", "rolt"],
            root.path(),
        );
    }
    assert_identical(&t1, &t2, "checkpoints/rolt_seed5.ckpt");
    let m1 = metrics_without_walltime(&t1.join("metrics/rolt_seed5.jsonl"));
    let m2 = metrics_without_walltime(&t2.join("metrics/rolt_seed5.jsonl"));
    assert_eq!(m1, m2, "criterion 9 FAIL: metric logs differ beyond wall time");
    assert_eq!(m1.len(), 2, "expected one metric row per iteration");

    // eval twice against the first checkpoint
    let ckpt = t1.join("checkpoints/rolt_seed5.ckpt");
    let (e1, e2) = (root.path().join("e1"), root.path().join("e2"));
    for out in [&e1, &e2] {
        run(
            &[
                "eval", "--config", cfg, "--seed", "5", "--out", out.to_str().unwrap(),
                "--variant", "rolt", "--checkpoint", ckpt.to_str().unwrap(),
            ],
            root.path(),
        );
    }
    assert_identical(&e1, &e2, "reports/eval_rolt.tsv");
    assert_identical(&e1, &e2, "reports/eval_rolt_summary.tsv");

    // stiffness protocol twice (trains its own checkpoint per run)
    let (s1, s2) = (root.path().join("s1"), root.path().join("s2"));
    for out in [&s1, &s2] {
        run(
            &["stiffness", "--config", cfg, "--seed", "7", "--out", out.to_str().unwrap(), "--variant", "rolt"],
            root.path(),
        );
    }
    assert_identical(&s1, &s2, "reports/stiffness_rolt.tsv");
    assert_identical(&s1, &s2, "reports/stiffness_rolt_summary.tsv");
    assert_identical(&s1, &s2, "checkpoints/rolt_seed7.ckpt");

    // noise sweep twice
    let (n1, n2) = (root.path().join("n1"), root.path().join("n2"));
    for out in [&n1, &n2] {
        run(
            &["noise-sweep", "--config", cfg, "--seed", "7", "--out", out.to_str().unwrap(), "--variant", "rolt"],
            root.path(),
        );
    }
    assert_identical(&n1, &n2, "reports/noise_rolt.tsv");
    assert_identical(&n1, &n2, "reports/noise_rolt_summary.tsv");
    assert_identical(&n1, &n2, "reports/plots/noise_rolt_low_freq.csv");
    assert_identical(&n1, &n2, "reports/plots/noise_rolt_high_freq.csv");

    // attention dump twice off the same checkpoint
    let (a1, a2) = (root.path().join("a1"), root.path().join("a2"));
    for out in [&a1, &a2] {
        run(
            &[
                "attn", "--config", cfg, "--seed", "5", "--out", out.to_str().unwrap(),
                "--variant", "rolt", "--checkpoint", ckpt.to_str().unwrap(),
            ],
            root.path(),
        );
    }
    assert_identical(&a1, &a2, "attn/attn_clean.tsv");
    assert_identical(&a1, &a2, "attn/attn_masked.tsv");

    println!("PASS criterion 9: train/eval/stiffness/noise-sweep/attn outputs identical across reruns (timestamps excluded)");
}

#[test]
fn damage_cli_runs_on_hexapod_config() {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("hex.toml");
    let hexapod = format!(
        "{TINY_CONFIG}\n[robot]\nlegs = 6\nbase_mass = 16.0\nbase_inertia = 0.6\nattach_x = [0.3, 0.18, 0.06, -0.06, -0.18, -0.3]\n\n[model.extra]\n"
    );
    // model.legs must match; rewrite the model section instead of appending.
    let hexapod = hexapod.replace("[model]\nhidden_dim = 16", "[model]\nlegs = 6\nhidden_dim = 16");
    let hexapod = hexapod.replace("\n[model.extra]\n", "");
    std::fs::write(&cfg_path, hexapod).unwrap();
    let out = root.path().join("out");
    run(
        &[
            "damage", "--config", cfg_path.to_str().unwrap(), "--seed", "1",
            "--out", out.to_str().unwrap(), "--variant", "rolt",
        ],
        root.path(),
    );
    let report = std::fs::read_to_string(out.join("reports/damage_rolt.tsv")).unwrap();
    // 9 unseen disables x 2 seeds + header.
    assert_eq!(report.lines().count(), 1 + 9 * 2);
}
