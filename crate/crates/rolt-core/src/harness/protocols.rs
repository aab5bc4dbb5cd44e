//! The paper-style evaluation protocols: stiffness (train with one calf
//! locked, test the other legs' locks), damage (hexapod torque disables),
//! observation-noise sweeps, and attention-map dumps. Protocols load an
//! existing checkpoint when one is present, train one when the config has a
//! training budget, and otherwise instruct the caller to train first.

use super::checkpoint::{checkpoint_load, checkpoint_save};
use super::config::ExperimentConfig;
use super::eval::{eval_episode, EvalCondition};
use super::metrics::MetricWriter;
use super::report::{EvalReport, ReportRow};
use crate::corrupt::{CorruptionKind, CorruptionSpec};
use crate::error::{Result, RoltError};
use crate::model::{DropoutMaskRecord, Policy, Variant};
use crate::ppo::{train_loop, EnvPool, EpisodeSampler, ObsNormalizer, TrainSummary};
use crate::sim::{Env, PerturbationSpec, Terrain};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy)]
pub struct ProtocolArgs<'a> {
    pub cfg: &'a ExperimentConfig,
    pub variant: Variant,
    pub seed: u64,
    pub out_dir: &'a Path,
}

pub fn checkpoint_path(out_dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("{}_seed{}.ckpt", variant.name(), seed))
}

pub fn metrics_path(out_dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    out_dir.join("metrics").join(format!("{}_seed{}.jsonl", variant.name(), seed))
}

fn reports_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("reports")
}

/// Train one variant on the given terrains/faults, writing the metric log
/// and the final checkpoint. Returns the checkpoint path and the summary.
pub fn train_variant(
    cfg: &ExperimentConfig,
    variant: Variant,
    seed: u64,
    out_dir: &Path,
    terrains: &[Terrain],
    faults: &[PerturbationSpec],
) -> Result<(PathBuf, TrainSummary)> {
    let mut model_cfg = cfg.model.clone();
    model_cfg.variant = variant;
    let mut policy = Policy::new(model_cfg.clone(), seed)?;
    let sampler = EpisodeSampler {
        terrains: terrains.to_vec(),
        faults: faults.to_vec(),
        command_range: (cfg.train.command_min, cfg.train.command_max),
        push_interval: cfg.train.push_interval,
        push_vel: cfg.train.push_vel,
    };
    let mut pool = EnvPool::new(&cfg.robot, cfg.scan, model_cfg.history, sampler, cfg.ppo.envs, seed)?;
    let ckpt = checkpoint_path(out_dir, variant, seed);
    let mut metrics = MetricWriter::create(&metrics_path(out_dir, variant, seed))?;
    let every = cfg.train.checkpoint_every;
    let total = cfg.ppo.iterations;
    let summary = train_loop(&mut policy, &mut pool, &cfg.ppo, seed, |log, policy, norm| {
        metrics.write(log)?;
        let last = log.iteration == total;
        if last || (every > 0 && log.iteration % every == 0) {
            checkpoint_save(&ckpt, policy, norm, log.iteration as u64)?;
        }
        Ok(())
    })?;
    Ok((ckpt, summary))
}

/// Load the variant's checkpoint; train it if missing and the config has a
/// budget; otherwise error with instructions.
pub fn ensure_policy(
    cfg: &ExperimentConfig,
    variant: Variant,
    seed: u64,
    out_dir: &Path,
    terrains: &[Terrain],
    faults: &[PerturbationSpec],
) -> Result<(Policy, ObsNormalizer)> {
    let path = checkpoint_path(out_dir, variant, seed);
    if !path.exists() {
        if cfg.ppo.iterations == 0 {
            return Err(RoltError::Config(format!(
                "no checkpoint at {} and ppo.iterations = 0; run `rolt train --variant {}` first",
                path.display(),
                variant.name()
            )));
        }
        train_variant(cfg, variant, seed, out_dir, terrains, faults)?;
    }
    let (policy, norm, _) = checkpoint_load(&path)?.into_policy()?;
    if policy.cfg.variant != variant {
        return Err(RoltError::Checkpoint(format!(
            "checkpoint at {} holds variant {}, expected {}",
            path.display(),
            policy.cfg.variant.name(),
            variant.name()
        )));
    }
    Ok((policy, norm))
}

/// Evaluate a list of labelled conditions over the config's seed count, in
/// parallel over (condition, seed) pairs, deterministically.
fn evaluate_conditions(
    cfg: &ExperimentConfig,
    policy: &Policy,
    normalizer: &ObsNormalizer,
    conditions: &[(String, EvalCondition)],
) -> Result<EvalReport> {
    let jobs: Vec<(String, EvalCondition, u64)> = conditions
        .iter()
        .flat_map(|(label, cond)| {
            (0..cfg.eval.seeds).map(move |s| (label.clone(), cond.clone(), s))
        })
        .collect();
    let rows: Vec<Result<ReportRow>> = jobs
        .par_iter()
        .map(|(label, cond, seed)| {
            let out = eval_episode(policy, normalizer, &cfg.robot, cfg.scan, cond, *seed)?;
            Ok(ReportRow {
                condition: label.clone(),
                seed: *seed,
                distance: out.distance,
                fall_time: out.fall_time,
                episode_return: out.episode_return,
            })
        })
        .collect();
    let rows: Result<Vec<ReportRow>> = rows.into_iter().collect();
    Ok(EvalReport::new(rows?))
}

/// Plain evaluation of a checkpoint under the healthy condition.
pub fn run_eval(args: ProtocolArgs, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let cfg = args.cfg;
    let (policy, norm) = match checkpoint {
        Some(p) => {
            let (policy, norm, _) = checkpoint_load(p)?.into_policy()?;
            (policy, norm)
        }
        None => ensure_policy(
            cfg,
            args.variant,
            args.seed,
            args.out_dir,
            &cfg.training_terrains()?,
            &cfg.fault,
        )?,
    };
    let cond = EvalCondition {
        terrain: Terrain::make(cfg.eval.terrain)?,
        perturbation: PerturbationSpec::None,
        corruption: CorruptionSpec::none(),
        command: cfg.eval.command,
    };
    let report = evaluate_conditions(cfg, &policy, &norm, &[("healthy".to_string(), cond)])?;
    let dir = reports_dir(args.out_dir);
    report.write_rows_tsv(&dir.join(format!("eval_{}.tsv", args.variant.name())))?;
    report.write_summary_tsv(&dir.join(format!("eval_{}_summary.tsv", args.variant.name())))?;
    Ok(report)
}

/// Stiffness protocol: train with the front leg's calf locked (plus healthy
/// episodes), evaluate each *other* leg's calf locked, at the fixed command.
pub fn run_stiffness_protocol(args: ProtocolArgs) -> Result<EvalReport> {
    let cfg = args.cfg;
    let calf = 1;
    let lock_angle = cfg.robot.q_default[calf];
    let train_fault = PerturbationSpec::Lock { leg: 0, joint: calf, angle: lock_angle };
    let terrains = cfg.training_terrains()?;
    let (policy, norm) =
        ensure_policy(cfg, args.variant, args.seed, args.out_dir, &terrains, &[train_fault])?;

    let eval_terrain = Terrain::make(cfg.eval.terrain)?;
    let mut conditions = vec![(
        "healthy".to_string(),
        EvalCondition {
            terrain: eval_terrain,
            perturbation: PerturbationSpec::None,
            corruption: CorruptionSpec::none(),
            command: cfg.eval.command,
        },
    )];
    for leg in 1..cfg.robot.legs {
        let p = PerturbationSpec::Lock { leg, joint: calf, angle: lock_angle };
        conditions.push((
            p.label(),
            EvalCondition {
                terrain: eval_terrain,
                perturbation: p,
                corruption: CorruptionSpec::none(),
                command: cfg.eval.command,
            },
        ));
    }
    let report = evaluate_conditions(cfg, &policy, &norm, &conditions)?;
    let dir = reports_dir(args.out_dir);
    report.write_rows_tsv(&dir.join(format!("stiffness_{}.tsv", args.variant.name())))?;
    report.write_summary_tsv(&dir.join(format!("stiffness_{}_summary.tsv", args.variant.name())))?;
    Ok(report)
}

/// The hexapod's three training disables, front-to-back leg indexing with
/// adjacent pairs standing in for left/right: FRT = (0, thigh), MRT =
/// (2, thigh), MLC = (3, calf).
pub fn damage_train_faults() -> Vec<PerturbationSpec> {
    vec![
        PerturbationSpec::Disable { leg: 0, joint: 0 },
        PerturbationSpec::Disable { leg: 2, joint: 0 },
        PerturbationSpec::Disable { leg: 3, joint: 1 },
    ]
}

/// Damage protocol (hexapod): train with the three disables plus healthy,
/// evaluate every remaining (leg, joint) disable.
pub fn run_damage_protocol(args: ProtocolArgs) -> Result<EvalReport> {
    let cfg = args.cfg;
    if cfg.robot.legs != 6 {
        return Err(RoltError::Config(format!(
            "damage protocol needs the hexapod (6 legs), config has {}",
            cfg.robot.legs
        )));
    }
    let train_faults = damage_train_faults();
    let terrains = cfg.training_terrains()?;
    let (policy, norm) =
        ensure_policy(cfg, args.variant, args.seed, args.out_dir, &terrains, &train_faults)?;

    let eval_terrain = Terrain::make(cfg.eval.terrain)?;
    let mut conditions = Vec::new();
    for leg in 0..cfg.robot.legs {
        for joint in 0..cfg.robot.joints_per_leg {
            let p = PerturbationSpec::Disable { leg, joint };
            if train_faults.contains(&p) {
                continue;
            }
            conditions.push((
                p.label(),
                EvalCondition {
                    terrain: eval_terrain,
                    perturbation: p,
                    corruption: CorruptionSpec::none(),
                    command: cfg.eval.command,
                },
            ));
        }
    }
    let report = evaluate_conditions(cfg, &policy, &norm, &conditions)?;
    let dir = reports_dir(args.out_dir);
    report.write_rows_tsv(&dir.join(format!("damage_{}.tsv", args.variant.name())))?;
    report.write_summary_tsv(&dir.join(format!("damage_{}_summary.tsv", args.variant.name())))?;
    Ok(report)
}

/// Noise sweep: train on the configured terrain mix with clean observations,
/// then evaluate low-frequency offsets and high-frequency Gaussian noise
/// over the configured scale grids. Emits per-kind plot CSVs
/// (scale → return/distance) alongside the report.
pub fn run_noise_sweep(args: ProtocolArgs) -> Result<EvalReport> {
    let cfg = args.cfg;
    let train_terrains: Vec<Terrain> = cfg
        .noise
        .train_terrains
        .iter()
        .map(|&k| Terrain::make(k))
        .collect::<Result<_>>()?;
    let (policy, norm) =
        ensure_policy(cfg, args.variant, args.seed, args.out_dir, &train_terrains, &[])?;

    let eval_terrain = Terrain::make(cfg.noise.eval_terrain)?;
    let mut conditions = Vec::new();
    for &scale in &cfg.noise.offset_scales {
        let kind = if scale == 0.0 {
            // The zero cell must bit-match clean evaluation.
            CorruptionKind::LowFreq { patch_count: cfg.noise.patch_count, offset_scale: 0.0 }
        } else {
            CorruptionKind::LowFreq { patch_count: cfg.noise.patch_count, offset_scale: scale }
        };
        conditions.push((
            format!("low_freq_{scale:?}"),
            EvalCondition {
                terrain: eval_terrain,
                perturbation: PerturbationSpec::None,
                corruption: CorruptionSpec { kind, seed: args.seed },
                command: cfg.noise.command,
            },
        ));
    }
    for &sigma in &cfg.noise.sigmas {
        conditions.push((
            format!("high_freq_{sigma:?}"),
            EvalCondition {
                terrain: eval_terrain,
                perturbation: PerturbationSpec::None,
                corruption: CorruptionSpec {
                    kind: CorruptionKind::HighFreq {
                        sigma_v: sigma,
                        sigma_lat: sigma * cfg.noise.lat_ratio,
                    },
                    seed: args.seed,
                },
                command: cfg.noise.command,
            },
        ));
    }
    let report = evaluate_conditions(cfg, &policy, &norm, &conditions)?;
    let dir = reports_dir(args.out_dir);
    report.write_rows_tsv(&dir.join(format!("noise_{}.tsv", args.variant.name())))?;
    report.write_summary_tsv(&dir.join(format!("noise_{}_summary.tsv", args.variant.name())))?;
    write_noise_plots(args, &report)?;
    Ok(report)
}

/// Line-plot data: one CSV per noise kind with return and distance against
/// the swept scale.
fn write_noise_plots(args: ProtocolArgs, report: &EvalReport) -> Result<()> {
    use std::io::Write;
    let dir = reports_dir(args.out_dir).join("plots");
    std::fs::create_dir_all(&dir)?;
    for (kind, scales) in [
        ("low_freq", &args.cfg.noise.offset_scales),
        ("high_freq", &args.cfg.noise.sigmas),
    ] {
        let path = dir.join(format!("noise_{}_{kind}.csv", args.variant.name()));
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "scale,return_mean,return_std,distance_mean,distance_std")?;
        for &scale in scales.iter() {
            let label = format!("{kind}_{scale:?}");
            if let Some(agg) = report.aggregate().into_iter().find(|a| a.condition == label) {
                writeln!(
                    w,
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    scale, agg.return_mean, agg.return_std, agg.distance_mean, agg.distance_std
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnScenario {
    Clean,
    /// A fixed leading subset of patches zeroed out.
    Masked,
}

impl AttnScenario {
    pub fn name(&self) -> &'static str {
        match self {
            AttnScenario::Clean => "clean",
            AttnScenario::Masked => "masked",
        }
    }
}

/// Average final-layer attention from each leg-token query to each patch key
/// (over heads and legs) for the scenario; write the P values as an
/// N_h × N_w grid of tab-separated text. Returns the grid values.
pub fn attention_dump(
    cfg: &ExperimentConfig,
    policy: &Policy,
    normalizer: &ObsNormalizer,
    scenario: AttnScenario,
    out_dir: &Path,
) -> Result<Vec<f64>> {
    use std::io::Write;
    let terrain = Terrain::make(cfg.noise.eval_terrain)?;
    let mut env = Env::new(cfg.robot.clone(), terrain, cfg.scan, policy.cfg.history)?;
    let (obs, mut map) = env.reset(PerturbationSpec::None, cfg.noise.command, 0)?;
    if scenario == AttnScenario::Masked {
        // Zero out the first third of the patches (at least one).
        let masked = (policy.cfg.patches() / 3).max(1);
        let ph = policy.cfg.map_rows / policy.cfg.patch_rows;
        let pw = policy.cfg.map_cols / policy.cfg.patch_cols;
        for p in 0..masked {
            let pr = p / policy.cfg.patch_cols;
            let pc = p % policy.cfg.patch_cols;
            for r in 0..ph {
                for c in 0..pw {
                    map.heights[(pr * ph + r) * map.cols + pc * pw + c] = 0.0;
                }
            }
        }
    }
    let norm_obs = normalizer.normalize(&obs);
    let out = policy.forward(&norm_obs, &map, &DropoutMaskRecord::eval(), true);
    if out.attention.is_empty() {
        return Err(RoltError::Config(format!(
            "variant {} has no attention maps",
            policy.cfg.variant.name()
        )));
    }
    let t = policy.cfg.tokens();
    let p = policy.cfg.patches();
    let offset = policy.cfg.patch_row_offset();
    let legs = policy.cfg.legs;
    let last = out.attention.last().unwrap();
    let mut grid = vec![0.0; p];
    for head in last {
        for leg in 0..legs {
            for patch in 0..p {
                grid[patch] += head[leg * t + offset + patch];
            }
        }
    }
    let denom = (last.len() * legs) as f64;
    for v in &mut grid {
        *v /= denom;
    }

    let dir = out_dir.join("attn");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("attn_{}.tsv", scenario.name()));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for r in 0..policy.cfg.patch_rows {
        let row: Vec<String> = (0..policy.cfg.patch_cols)
            .map(|c| format!("{:.9}", grid[r * policy.cfg.patch_cols + c]))
            .collect();
        writeln!(w, "{}", row.join("\t"))?;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::ppo::PpoConfig;
    use crate::sim::{RobotSpec, ScanConfig};

    pub(crate) fn tiny_experiment(variant: Variant) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelConfig {
                variant,
                hidden_dim: 16,
                heads: 2,
                ffn_dim: 32,
                patch_rows: 2,
                patch_cols: 2,
                map_rows: 4,
                map_cols: 8,
                history: 2,
                mlp_hidden: (32, 24),
                ..Default::default()
            },
            scan: ScanConfig { rows: 4, cols: 8, spacing: 0.1 },
            ppo: PpoConfig {
                envs: 2,
                horizon: 4,
                epochs: 1,
                minibatches: 1,
                iterations: 2,
                ..Default::default()
            },
            noise: super::super::config::NoiseConfig {
                patch_count: 2,
                offset_scales: vec![0.0, 0.1],
                sigmas: vec![0.0, 0.05],
                ..Default::default()
            },
            eval: super::super::config::EvalConfig { seeds: 2, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn stiffness_report_shape() {
        let cfg = tiny_experiment(Variant::Rolt);
        let dir = tempfile::tempdir().unwrap();
        let args = ProtocolArgs { cfg: &cfg, variant: Variant::Rolt, seed: 1, out_dir: dir.path() };
        let report = run_stiffness_protocol(args).unwrap();
        // healthy + (L-1) unseen locks, each over eval.seeds seeds.
        let conds = report.conditions();
        assert_eq!(conds.len(), 4);
        let locks = conds.iter().filter(|c| c.starts_with("lock_")).count();
        assert_eq!(locks, 3);
        assert!(conds.contains(&"healthy".to_string()));
        assert_eq!(report.rows.len(), 4 * 2);
        assert!(dir.path().join("reports/stiffness_rolt.tsv").exists());
    }

    #[test]
    fn damage_requires_hexapod_and_has_nine_conditions() {
        let quad = tiny_experiment(Variant::Rolt);
        let dir = tempfile::tempdir().unwrap();
        let args = ProtocolArgs { cfg: &quad, variant: Variant::Rolt, seed: 1, out_dir: dir.path() };
        assert!(run_damage_protocol(args).is_err());

        let mut hex = tiny_experiment(Variant::Rolt);
        hex.robot = RobotSpec::hexapod();
        hex.model.legs = 6;
        hex.validate().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let args2 = ProtocolArgs { cfg: &hex, variant: Variant::Rolt, seed: 1, out_dir: dir2.path() };
        let report = run_damage_protocol(args2).unwrap();
        // 2L - 3 = 9 unseen disables for L = 6.
        assert_eq!(report.conditions().len(), 9);
        for c in report.conditions() {
            assert!(c.starts_with("disable_"));
        }
    }

    #[test]
    fn missing_checkpoint_with_zero_budget_instructs_to_train() {
        let mut cfg = tiny_experiment(Variant::Rolt);
        cfg.ppo.iterations = 0;
        let dir = tempfile::tempdir().unwrap();
        let err = ensure_policy(&cfg, Variant::Rolt, 3, dir.path(), &[Terrain::flat()], &[])
            .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("train"), "{msg}");
    }

    #[test]
    fn attention_dump_grids() {
        let cfg = tiny_experiment(Variant::Rolt);
        let policy = Policy::new(cfg.model.clone(), 9).unwrap();
        let norm = ObsNormalizer::new(2);
        let dir = tempfile::tempdir().unwrap();
        let clean = attention_dump(&cfg, &policy, &norm, AttnScenario::Clean, dir.path()).unwrap();
        let masked = attention_dump(&cfg, &policy, &norm, AttnScenario::Masked, dir.path()).unwrap();
        assert_eq!(clean.len(), 4);
        // Patch columns are a subset of each attention row.
        let sum: f64 = clean.iter().sum();
        assert!(sum <= 1.0 + 1e-9, "grid sums to {sum}");
        assert!(clean.iter().all(|v| *v >= 0.0));
        let diff: f64 = clean
            .iter()
            .zip(masked.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff.is_finite());
        assert!(dir.path().join("attn/attn_clean.tsv").exists());
        assert!(dir.path().join("attn/attn_masked.tsv").exists());
    }
}
