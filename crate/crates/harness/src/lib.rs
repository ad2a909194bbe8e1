//! Experiment runner around the `wavefilter` library: TOML configs, CSV
//! outputs and the `wavefilter` command line tool.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{load_config, run_compare, run_filter, run_riccati, run_simulate, RunOptions, RunStatus, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid configuration; `key` is the dotted path of the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Runtime(#[from] wavefilter::Error),
    #[error("io: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            _ => 1,
        }
    }
}
