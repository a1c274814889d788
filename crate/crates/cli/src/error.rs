use thiserror::Error;

/// Failures that stop a command before it can report on its checks. Each
/// maps to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration is not well formed: exit 2.
    #[error("schema error: {0}")]
    Schema(String),
    /// The configuration describes an invalid model: exit 3.
    #[error("model error: {0}")]
    Model(String),
    /// Something failed while running: exit 4.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Model(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub(crate) fn runtime(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}
