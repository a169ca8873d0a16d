//! Shared pieces of the `judgekit` binary: engine setup, the judge path used
//! by both the CLI and the reward service, and the service itself.

pub mod service;

use std::path::Path;

use judgekit::sandbox::{SandboxMode, SandboxRoot};
use judgekit::{judge_suite, Engine, JudgeError, JudgeOptions, JudgeReport, ProfileRegistry, TestSuite};

/// Engine from explicit settings; `None` falls back to the builtin profiles
/// and the default sandbox root.
pub fn build_engine(root: Option<&Path>, profiles: Option<&Path>, unsafe_dev: bool) -> anyhow::Result<Engine> {
    let registry = match profiles {
        Some(dir) => ProfileRegistry::with_dir(dir)?,
        None => ProfileRegistry::builtin(),
    };
    let root = match root {
        Some(r) => SandboxRoot::new(r)?,
        None => SandboxRoot::from_env()?,
    };
    let mut engine = Engine::new(registry, root);
    if unsafe_dev {
        log::warn!("UNSAFE development mode: guests run without isolation");
        engine = engine.with_mode(SandboxMode::UnsafeDev);
    }
    Ok(engine)
}

/// Judges one submission. `judgekit judge` and `POST /v1/judge` both go
/// through here.
pub fn judge_submission(
    engine: &Engine,
    suite: &TestSuite,
    source: &str,
    language: &str,
    early_stop: bool,
    parallelism: usize,
) -> Result<JudgeReport, JudgeError> {
    judge_suite(engine, source, language, suite, JudgeOptions { parallelism: parallelism.max(1), early_stop })
}

/// File-name-safe form of a problem id.
pub fn file_stem(problem_id: &str) -> String {
    problem_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect::<String>()
        .trim_start_matches('.')
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_safe() {
        assert_eq!(file_stem("cf/1234-A"), "cf_1234-A");
        assert_eq!(file_stem("../x"), "_x");
        assert_eq!(file_stem("p 1"), "p_1");
    }
}
