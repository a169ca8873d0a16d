//! Judging engine and test-suite synthesis for competitive-programming
//! problems, built on [`judgekit_sandbox`].

pub mod curation;
pub mod engine;
pub mod evalmetrics;
pub mod error;
pub mod judge;
pub mod llm;
pub mod prompts;
pub mod spjgen;
pub mod model;
pub mod store;
pub mod testgen;
pub mod toolchain;

pub use engine::Engine;
pub use error::{EvalError, JudgeError, LlmError, SpjError, TestgenError, ToolchainError};
pub use judge::{
    compare_outputs, judge_artifact, judge_case, judge_suite, run_checker, CaseResult, CheckerVerdict, Comparison,
    JudgeOptions, JudgeReport, Verdict,
};
pub use model::{CaseKind, CaseOrigin, CheckerProgram, CheckerStage, Example, Problem, Solution, TestCase, TestSuite};
pub use toolchain::{compile, CompileResult, CompiledArtifact, GuestLanguageProfile, ProfileRegistry};

pub use judgekit_sandbox as sandbox;
