//! Experiment harness around `pbh-core`: TOML configs, experiment drivers
//! and deterministic reports.

// NaN-rejecting `!(a > b)` checks are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use run::{run, Outcome, RunError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot read config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("config is for `{found}` but the subcommand is `{expected}`")]
    KindMismatch { expected: String, found: String },
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything wrong with the input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(RunError::Validation(_)) | CliError::Config { .. } | CliError::KindMismatch { .. } => 2,
            CliError::Run(RunError::Numerical { .. }) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Loads the config for `kind` (defaults when `path` is `None`) and applies
/// the seed override.
pub fn load_config(kind: &str, path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut config = match path {
        None => ExperimentConfig::default_for(kind).expect("subcommands match experiment kinds"),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::Config { path: p.into(), message: e.to_string() })?;
            ExperimentConfig::parse(&text).map_err(|message| CliError::Config { path: p.into(), message })?
        }
    };
    if config.kind() != kind {
        return Err(CliError::KindMismatch { expected: kind.into(), found: config.kind().into() });
    }
    if let Some(s) = seed {
        config.set_seed(s);
    }
    Ok(config)
}

/// Runs the experiment and writes its outputs; nothing is written on failure.
pub fn execute(config: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let outcome = run(config)?;
    Ok(report::emit(out, config, &outcome)?)
}
