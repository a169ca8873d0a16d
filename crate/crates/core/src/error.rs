use std::io;

use judgekit_sandbox::SandboxError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("suite `{0}` has no cases")]
    EmptySuite(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unsupported llm uri `{0}` (expected mock:<script.jsonl> or http(s)://...)")]
    UnsupportedUri(String),
    #[error("llm script: {0}")]
    Script(String),
    #[error("llm request failed: {0}")]
    Request(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("problem `{0}` needs at least two gold solutions")]
    TooFewGolds(String),
    #[error("gold solution {index} of `{problem}` failed to compile:\n{log}")]
    GoldCompile { problem: String, index: usize, log: String },
    #[error("sandbox infrastructure failure: {0}")]
    Infrastructure(String),
    /// No valid case of any kind after every round; `history` holds every
    /// feedback record produced on the way.
    #[error("synthesis failed for `{problem}` after {} feedback records", history.len())]
    SynthesisFailed { problem: String, history: Vec<crate::testgen::SynthesisLogEntry> },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Error)]
pub enum SpjError {
    /// The LLM answer did not follow the requested layout; the raw text is kept.
    #[error("unparseable {stage} response: {reason}")]
    Pipeline { stage: &'static str, reason: String, raw: String },
    #[error("review expects a freshly generated checker")]
    WrongStage,
    #[error("gold solution failed on validated case {case}: {detail}")]
    GoldFailed { case: usize, detail: String },
    #[error("validation suite is empty")]
    EmptySuite,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no candidate solutions")]
    NoCandidates,
    #[error("no labeled solutions")]
    NoLabels,
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
}
