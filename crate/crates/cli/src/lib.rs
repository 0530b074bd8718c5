//! Experiment runner behind the `pdectl` binary: configuration, dispatch and reports.

pub mod config;
pub mod report;
mod run;

pub use config::{Experiment, ExperimentConfig};
pub use report::{emit_report, Check, Comparison, Format, RunReport};
pub use run::run_experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// A module failed while running the experiment.
    #[error("{0}")]
    Runtime(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 for usage errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 3,
        }
    }
}
