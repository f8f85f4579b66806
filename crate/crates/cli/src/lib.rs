//! Experiment orchestration behind the `degenlab` binary.

use std::path::PathBuf;

use degenlab_core::discretization::{MeshSpec, Potentials, WeightSpec};
use serde_json::json;
use thiserror::Error;

pub mod config;
mod experiments;
pub mod manifest;

pub use config::{Experiment, ExperimentConfig, Suite};
pub use experiments::{Check, Comparison, Outcome};
pub use manifest::{run, run_suite, Artifact, RunManifest, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("experiment `{experiment}` failed: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: degenlab_core::Error,
    },
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: degenlab_core::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for runtime failures
    /// (1 is reserved for completed runs with failed checks).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            _ => 3,
        }
    }

    pub fn core(&self) -> Option<&degenlab_core::Error> {
        match self {
            CliError::Experiment { source, .. } | CliError::Output { source, .. } => Some(source),
            CliError::ConfigInvalid { .. } => None,
        }
    }
}

/// Content digest of a discretized problem, independent of how the config was written.
pub fn cache_key(mesh: &MeshSpec, weight: &WeightSpec, potentials: &Potentials) -> String {
    degenlab_core::io::digest(&json!({
        "mesh": mesh,
        "weight": weight,
        "potentials": potentials,
        "format": degenlab_core::io::VERSION,
    }))
}
