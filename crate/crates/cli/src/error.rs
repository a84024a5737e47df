use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;

use crate::config::ConfigIssue;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read configuration {}: {reason}", path.display())]
    ConfigRead { path: PathBuf, reason: String },

    #[error("invalid configuration ({} problem(s))", .0.len())]
    Invalid(Vec<ConfigIssue>),

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("cannot write {}: {reason}", path.display())]
    Write { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] navslip_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigRead { .. } => "config_read",
            CliError::Invalid(_) => "invalid_config",
            CliError::Unsupported(_) => "unsupported",
            CliError::Write { .. } => "write_failed",
            CliError::Core(_) => "runtime",
        }
    }

    /// 2 for problems with the request, 3 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. } | CliError::Invalid(_) | CliError::Unsupported(_) => 2,
            CliError::Write { .. } | CliError::Core(_) => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Invalid(issues) = self {
            v["issues"] = json!(issues);
        }
        v
    }
}
