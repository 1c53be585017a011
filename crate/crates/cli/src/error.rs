//! CLI error type with a machine-readable rendering.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] dmpnet::CoreError),

    #[error("{0}")]
    Scenario(String),
}

/// Shape of the error report printed to stderr on failure.
#[derive(Serialize)]
struct ErrorReport<'a> {
    error: String,
    kind: &'a str,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "core",
            CliError::Scenario(_) => "scenario",
        }
    }

    /// JSON rendering for the machine-readable stderr report.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport {
            error: self.to_string(),
            kind: self.kind(),
        })
        .unwrap_or_else(|_| format!("{{\"error\":\"{self}\"}}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
