//! Configuration, checkpoints, metric logs, and the evaluation protocols.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod protocols;
mod report;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_VERSION};
pub use config::{EvalConfig, ExperimentConfig, NoiseConfig, TerrainSpec, TrainSetup};
pub use eval::{eval_episode, EvalCondition, EvalOutcome};
pub use metrics::MetricWriter;
pub use protocols::{
    attention_dump, checkpoint_path, damage_train_faults, ensure_policy, metrics_path,
    run_damage_protocol, run_eval, run_noise_sweep, run_stiffness_protocol, train_variant,
    AttnScenario, ProtocolArgs,
};
pub use report::{EvalReport, ReportRow};
