use std::fmt;

use serde::Serialize;

use dfgl_core::protocol::{ConfigError, ProtocolError};

/// Exit code for invalid input (config, dataset, arguments).
pub const EXIT_INVALID: i32 = 2;
/// Exit code for failures during a run.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn invalid(field: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_INVALID,
            field: Some(field.into()),
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            field: None,
            message: message.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::runtime(format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::invalid(e.field, e.message)
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(c) => c.into(),
            ProtocolError::Partition(p) => Self::invalid("partition", p),
            ProtocolError::ClientCount { .. } => Self::invalid("n_clients", e),
            other => Self::runtime(other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}
