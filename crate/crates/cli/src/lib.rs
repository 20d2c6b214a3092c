//! Command implementations behind the `hmkit` binary.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_eval, cmd_fuse_demo, cmd_run, cmd_synth, Ablation, FuseDemoOptions, RunReport, RunSummary,
};
pub use config::{MetricsConfig, Perturbation, PerturbationPreset, PipelineConfig, SyncConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hmkit::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for synchronization failure, 4 for numerical
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(hmkit::Error::SyncFailure { .. }) => 3,
            CliError::Core(hmkit::Error::Numerical(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}
