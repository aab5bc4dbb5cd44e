//! Experiment configuration: a hierarchical TOML file with environment
//! variable overrides of the form `ROLT_<SECTION>_<KEY>` (scalar fields of
//! top-level sections only; the section name is the part before the first
//! underscore).

use crate::error::{Result, RoltError};
use crate::model::ModelConfig;
use crate::ppo::PpoConfig;
use crate::sim::{PerturbationSpec, RobotSpec, ScanConfig, Terrain, TerrainKind};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSetup {
    /// Training commands are sampled uniformly from this range per episode.
    pub command_min: f64,
    pub command_max: f64,
    /// Write a checkpoint every N iterations (0 = final only).
    pub checkpoint_every: usize,
    /// Kick the base with a random horizontal velocity every N control steps
    /// during training rollouts (0 = off).
    pub push_interval: u64,
    /// Push magnitude bound, m/s.
    pub push_vel: f64,
}

impl Default for TrainSetup {
    fn default() -> Self {
        TrainSetup {
            command_min: 0.3,
            command_max: 1.0,
            checkpoint_every: 0,
            push_interval: 100,
            push_vel: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Fixed evaluation command for the dynamics protocols, m/s.
    pub command: f64,
    /// Evaluation seeds per condition.
    pub seeds: u64,
    /// Terrain for the stiffness/damage protocols and plain eval runs.
    pub terrain: TerrainKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { command: 0.75, seeds: 5, terrain: TerrainKind::Flat }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Fixed command for the noise protocol, m/s.
    pub command: f64,
    /// Patches offset per step in the low-frequency sweep.
    pub patch_count: usize,
    /// Offset scales swept for low-frequency noise, meters.
    pub offset_scales: Vec<f64>,
    /// Gaussian scales swept for high-frequency noise, meters.
    pub sigmas: Vec<f64>,
    /// sigma_lat = lat_ratio · sigma.
    pub lat_ratio: f64,
    /// Terrains the noise-protocol checkpoint trains on (clean observations).
    pub train_terrains: Vec<TerrainKind>,
    /// Terrain the sweep evaluates on.
    pub eval_terrain: TerrainKind,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            command: 0.5,
            patch_count: 4,
            offset_scales: vec![0.0, 0.05, 0.1, 0.2],
            sigmas: vec![0.0, 0.05, 0.1, 0.2],
            lat_ratio: 0.5,
            train_terrains: vec![
                TerrainKind::Stairs { rise: 0.1, run: 0.3 },
                TerrainKind::Slope { grade: 0.1 },
                TerrainKind::Platform { height: 0.1, spacing: 0.5 },
            ],
            eval_terrain: TerrainKind::Stairs { rise: 0.1, run: 0.3 },
        }
    }
}

/// Everything a run needs: model, robot, terrains, faults, PPO, protocol
/// parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub robot: RobotSpec,
    pub scan: ScanConfig,
    /// Training terrain list; one is sampled per episode.
    pub terrain: Vec<TerrainKind>,
    /// Training fault set (a healthy situation is always included).
    pub fault: Vec<PerturbationSpec>,
    pub ppo: PpoConfig,
    pub train: TrainSetup,
    pub eval: EvalConfig,
    pub noise: NoiseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            robot: RobotSpec::quadruped(),
            scan: ScanConfig::default(),
            terrain: vec![TerrainKind::Flat],
            fault: Vec::new(),
            ppo: PpoConfig::default(),
            train: TrainSetup::default(),
            eval: EvalConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

pub use crate::sim::TerrainKind as TerrainSpec;

impl ExperimentConfig {
    /// Parse a TOML file, apply ROLT_* environment overrides, validate.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            RoltError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text, std::env::vars())
    }

    pub fn from_toml(
        text: &str,
        env: impl Iterator<Item = (String, String)>,
    ) -> Result<ExperimentConfig> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| RoltError::Config(format!("config parse error: {e}")))?;
        apply_env_overrides(&mut value, env)?;
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| RoltError::Config(format!("config field error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.robot.validate()?;
        self.ppo.validate()?;
        if self.model.legs != self.robot.legs {
            return Err(RoltError::Config(format!(
                "model.legs {} != robot.legs {}",
                self.model.legs, self.robot.legs
            )));
        }
        if self.model.joints_per_leg != self.robot.joints_per_leg {
            return Err(RoltError::Config("model/robot joints_per_leg mismatch".into()));
        }
        if self.model.map_rows != self.scan.rows || self.model.map_cols != self.scan.cols {
            return Err(RoltError::Config(format!(
                "model map {}x{} != scan grid {}x{}",
                self.model.map_rows, self.model.map_cols, self.scan.rows, self.scan.cols
            )));
        }
        if self.terrain.is_empty() {
            return Err(RoltError::Config("terrain list is empty".into()));
        }
        for &kind in self.terrain.iter().chain(self.noise.train_terrains.iter()) {
            Terrain::make(kind)?;
        }
        Terrain::make(self.eval.terrain)?;
        Terrain::make(self.noise.eval_terrain)?;
        for f in &self.fault {
            f.validate(&self.robot)?;
        }
        if self.train.command_min > self.train.command_max {
            return Err(RoltError::Config("command_min > command_max".into()));
        }
        if self.eval.seeds == 0 {
            return Err(RoltError::Config("eval.seeds must be >= 1".into()));
        }
        if self.noise.patch_count > self.model.patches() {
            return Err(RoltError::Config(format!(
                "noise.patch_count {} exceeds {} patches",
                self.noise.patch_count,
                self.model.patches()
            )));
        }
        Ok(())
    }

    pub fn training_terrains(&self) -> Result<Vec<Terrain>> {
        self.terrain.iter().map(|&k| Terrain::make(k)).collect()
    }
}

/// `ROLT_PPO_LEARNING_RATE=1e-3` sets `[ppo] learning_rate`. Values parse as
/// bool, integer, then float, falling back to string. Arrays and nested
/// tables are not overridable.
fn apply_env_overrides(
    value: &mut toml::Value,
    env: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    let table = value
        .as_table_mut()
        .ok_or_else(|| RoltError::Config("config root must be a table".into()))?;
    let mut vars: Vec<(String, String)> = env
        .filter(|(k, _)| k.starts_with("ROLT_") && k.len() > 5)
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let rest = &key[5..];
        let Some((section, field)) = rest.split_once('_') else {
            return Err(RoltError::Config(format!(
                "override {key} must look like ROLT_<SECTION>_<KEY>"
            )));
        };
        let section = section.to_ascii_lowercase();
        let field = field.to_ascii_lowercase();
        let parsed = parse_override(&raw);
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        let Some(sect) = entry.as_table_mut() else {
            return Err(RoltError::Config(format!("section {section} is not a table")));
        };
        sect.insert(field, parsed);
    }
    Ok(())
}

fn parse_override(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}
