//! Experiment configs, replicated runs, CSV output and boxplot summaries.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{Algorithm, ConfigError, ExperimentConfig};
pub use runner::{
    run_experiment, run_replicate, ExperimentResult, ReplicateResult, RunError, RunOptions,
};
pub use summary::{summarize, GroupSummary};
