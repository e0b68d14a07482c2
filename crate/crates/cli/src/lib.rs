//! Batch driver for the `aubry` experiments.
//!
//! A run reads a [`config::RunConfig`], executes one [`run::Experiment`] and
//! writes its CSV/JSON outputs together with a `manifest.json` that lists
//! every file in the output directory and its SHA-256.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod plot;
pub mod run;

pub use config::{ConfigError, RawConfig, RunConfig};
pub use output::RunManifest;
pub use run::{run, Experiment};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{jobs} {what} exceed the job cap {cap}")]
    BudgetExceeded { jobs: usize, cap: usize, what: String },
    #[error("{job}: {message}")]
    Module { job: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// Machine-readable error written to stderr on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job: Option<String>,
}

impl RunError {
    pub fn record(&self) -> ErrorRecord {
        let (error, field, job) = match self {
            RunError::Config(e) => ("ConfigError", e.field(), None),
            RunError::BudgetExceeded { .. } => ("BudgetExceeded", None, None),
            RunError::Module { job, message } if message.starts_with("unsupported plot kind") => {
                ("UnsupportedKind", None, Some(job.clone()))
            }
            RunError::Module { job, .. } => ("ModuleError", None, Some(job.clone())),
            RunError::Io(_) => ("IoError", None, None),
        };
        ErrorRecord {
            error,
            message: self.to_string(),
            field,
            job,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::BudgetExceeded { .. } => 3,
            _ => 1,
        }
    }
}
