//! Command implementations behind the `sotto` binary: audio file ingestion,
//! manifests, artifact persistence, experiment config, and the subcommands
//! that wire the core modules into reproducible runs.

use thiserror::Error;

pub mod artifact;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod wav;

/// Exit code 2: the config or invocation is wrong. Exit code 3: a module
/// failed while running.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("module error: {0}")]
    Module(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Module(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Module(_) => "module",
        }
    }
}

macro_rules! module_error_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Module(e.to_string())
            }
        })+
    };
}

module_error_from!(
    sotto_core::dsp::DspError,
    sotto_core::metrics::MetricError,
    sotto_core::models::ModelError,
    sotto_core::optim::OptimError,
    sotto_core::prepare::PrepareError,
    sotto_core::runtime::RuntimeError,
    sotto_core::defense::DefenseError,
    sotto_core::bound::BoundError,
    sotto_core::distribution::DistributionError,
    wav::AudioIoError,
    artifact::ArtifactError,
    manifest::ManifestError,
);
