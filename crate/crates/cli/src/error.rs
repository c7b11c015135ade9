use regionlime_client::ClientError;
use serde::Serialize;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PREDICTOR: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
const EXIT_OTHER: i32 = 1;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit_code: i32,
}

/// Exit status for an engine or service error code.
pub fn exit_code_for(code: &str) -> i32 {
    match code {
        "remote_unavailable" | "protocol_violation" | "non_finite_output" | "predictor_required" => EXIT_PREDICTOR,
        "solver_diverged" | "singular_system" | "non_finite_loss" => EXIT_SOLVER,
        "internal" | "http_error" => EXIT_OTHER,
        _ => EXIT_INPUT,
    }
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: "invalid_input".into(), message: message.into(), exit_code: EXIT_INPUT }
    }

    fn from_code(code: &str, message: String) -> Self {
        Self { code: code.to_string(), message, exit_code: exit_code_for(code) }
    }
}

impl From<regionlime_core::Error> for CliError {
    fn from(e: regionlime_core::Error) -> Self {
        Self::from_code(e.code(), e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { code, message, .. } => Self::from_code(&code, message),
            ClientError::Transport(t) => Self { code: "service_unreachable".into(), message: t.to_string(), exit_code: EXIT_OTHER },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: "io_error".into(), message: e.to_string(), exit_code: EXIT_INPUT }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(format!("invalid JSON: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
