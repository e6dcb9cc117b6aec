//! Reproducible experiments for multi-camera odometry fusion: configuration,
//! the simulate/train/eval pipeline, metrics tables, comparisons and plots.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod stats;

use std::path::Path;

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing prerequisites: {}", .0.join(", "))]
    Prerequisite(Vec<String>),
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("bad input data: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Stable machine-readable kind.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Prerequisite(_) => "prerequisite",
            CliError::Parse { .. } => "parse",
            CliError::Data(_) => "data",
            CliError::Training(_) => "training",
            CliError::Schema(_) => "schema",
        }
    }

    /// One-line JSON object: `{"error":<code>,"message":<text>}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.code(), "message": self.to_string() }).to_string()
    }
}
