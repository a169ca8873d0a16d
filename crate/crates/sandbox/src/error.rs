use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors that prevent a run from being attempted at all. Isolation failures
/// during setup are not errors: they are reported as
/// [`TerminationKind::IsolationSetupFailure`](crate::TerminationKind).
#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("invalid workdir {path}: {reason}")]
    InvalidWorkdir { path: PathBuf, reason: String },
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("empty command")]
    EmptyCommand,
    #[error("whitelist {name}: line {line}: {reason}")]
    Whitelist { name: String, line: usize, reason: String },
    #[error("failed to launch {program}: {source}")]
    Launch {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("tracer failure: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
