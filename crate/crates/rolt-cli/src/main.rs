//! Command-line interface for the rolt locomotion laboratory.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rolt_core::harness::{
    attention_dump, checkpoint_load, checkpoint_path, run_damage_protocol, run_eval,
    run_noise_sweep, run_stiffness_protocol, train_variant, AttnScenario, EvalReport,
    ExperimentConfig, ProtocolArgs,
};
use rolt_core::model::Variant;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rolt", version, about = "Robust locomotion transformer laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted; ROLT_* env
    /// vars override scalar fields either way.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (checkpoints/, metrics/, reports/, attn/).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// rolt | mlp | roll_drop | module_pe | no_pe_drop | no_feature_drop
    #[arg(long, default_value = "rolt")]
    variant: String,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, Variant)> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("loading {}", p.display()))?,
            None => {
                let cfg = ExperimentConfig::from_toml("", std::env::vars())?;
                cfg
            }
        };
        let variant = Variant::parse(&self.variant)?;
        Ok((cfg, variant))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one variant on the config's terrains and fault set.
    Train(Common),
    /// Evaluate a checkpoint under the healthy condition.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Explicit checkpoint path (default: <out>/checkpoints/<variant>_seed<seed>.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Stiffness protocol: train with the front calf locked, test the others.
    Stiffness(Common),
    /// Damage protocol on the hexapod: torque-zero disables.
    Damage(Common),
    /// Observation-corruption sweep (low/high frequency noise).
    #[command(name = "noise-sweep")]
    NoiseSweep(Common),
    /// Dump averaged leg→patch attention grids for clean and masked maps.
    Attn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// clean | masked | both
        #[arg(long, default_value = "both")]
        scenario: String,
    },
}

fn print_report(report: &EvalReport) {
    println!("condition                 n  distance_m (mean±std)  fall_time_s (mean±std)  return (mean±std)");
    for a in report.aggregate() {
        println!(
            "{:<24} {:>2}  {:>8.3} ± {:<8.3}    {:>6.2} ± {:<6.2}      {:>9.2} ± {:<9.2}",
            a.condition, a.n, a.distance_mean, a.distance_std, a.fall_time_mean, a.fall_time_std,
            a.return_mean, a.return_std
        );
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Train(common) => {
            let (cfg, variant) = common.load()?;
            let terrains = cfg.training_terrains()?;
            let (ckpt, summary) =
                train_variant(&cfg, variant, common.seed, &common.out, &terrains, &cfg.fault)?;
            println!(
                "trained {} for {} iterations ({} env steps); checkpoint: {}",
                variant.name(),
                summary.iterations,
                summary.total_env_steps,
                ckpt.display()
            );
            if let (Some(first), Some(last)) =
                (summary.first_iteration_return, summary.final_window_return)
            {
                println!("mean episode return: iteration 1 = {first:.2}, final window = {last:.2}");
            }
        }
        Cmd::Eval { common, checkpoint } => {
            let (cfg, variant) = common.load()?;
            let args = ProtocolArgs { cfg: &cfg, variant, seed: common.seed, out_dir: &common.out };
            let report = run_eval(args, checkpoint.as_deref())?;
            print_report(&report);
        }
        Cmd::Stiffness(common) => {
            let (cfg, variant) = common.load()?;
            let args = ProtocolArgs { cfg: &cfg, variant, seed: common.seed, out_dir: &common.out };
            let report = run_stiffness_protocol(args)?;
            print_report(&report);
        }
        Cmd::Damage(common) => {
            let (cfg, variant) = common.load()?;
            let args = ProtocolArgs { cfg: &cfg, variant, seed: common.seed, out_dir: &common.out };
            let report = run_damage_protocol(args)?;
            print_report(&report);
        }
        Cmd::NoiseSweep(common) => {
            let (cfg, variant) = common.load()?;
            let args = ProtocolArgs { cfg: &cfg, variant, seed: common.seed, out_dir: &common.out };
            let report = run_noise_sweep(args)?;
            print_report(&report);
        }
        Cmd::Attn { common, checkpoint, scenario } => {
            let (cfg, variant) = common.load()?;
            let path =
                checkpoint.unwrap_or_else(|| checkpoint_path(&common.out, variant, common.seed));
            if !path.exists() {
                bail!(
                    "no checkpoint at {}; run `rolt train --variant {}` first",
                    path.display(),
                    variant.name()
                );
            }
            let (policy, norm, _) = checkpoint_load(&path)?.into_policy()?;
            let scenarios: Vec<AttnScenario> = match scenario.as_str() {
                "clean" => vec![AttnScenario::Clean],
                "masked" => vec![AttnScenario::Masked],
                "both" => vec![AttnScenario::Clean, AttnScenario::Masked],
                other => bail!("unknown scenario '{other}' (clean, masked, both)"),
            };
            let mut grids = Vec::new();
            for s in &scenarios {
                let grid = attention_dump(&cfg, &policy, &norm, *s, &common.out)?;
                println!("wrote attn/attn_{}.tsv ({} patch values)", s.name(), grid.len());
                grids.push(grid);
            }
            if grids.len() == 2 {
                let diff: f64 = grids[0]
                    .iter()
                    .zip(grids[1].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                println!("clean vs masked grid diff norm: {diff:.6}");
            }
        }
    }
    Ok(())
}
