use std::path::PathBuf;

use thiserror::Error;

/// A configuration or input validation failure, naming the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    TraceParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{0}")]
    Metric(#[from] MetricError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum MetricError {
    #[error("no retired demands")]
    NoDemands,
    #[error("empty measurement window")]
    EmptyWindow,
}
