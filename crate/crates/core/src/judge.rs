//! Verdicts for submissions against test suites.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use judgekit_sandbox::{ExecutionLimits, ResourceUsage, TerminationKind};
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::JudgeError;
use crate::model::{CheckerProgram, TestCase, TestSuite};
use crate::toolchain::{compile, CompileResult, CompiledArtifact};

/// Language checkers run under.
pub const CHECKER_LANGUAGE: &str = "python3";

/// Longest single argv string the kernel accepts (MAX_ARG_STRLEN minus the NUL).
pub const MAX_CHECKER_ARG_BYTES: usize = 128 * 1024 - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    WrongAnswer,
    TimeLimitExceeded,
    MemoryLimitExceeded,
    RuntimeError,
    CompileError,
    IllegalOperation,
    CheckerError,
    JudgeError,
}

impl Verdict {
    /// Rank used to pick a suite's aggregate verdict; higher wins.
    pub fn precedence(self) -> u8 {
        match self {
            Verdict::CompileError => 8,
            Verdict::JudgeError => 7,
            Verdict::IllegalOperation => 6,
            Verdict::MemoryLimitExceeded => 5,
            Verdict::TimeLimitExceeded => 4,
            Verdict::RuntimeError => 3,
            Verdict::CheckerError => 2,
            Verdict::WrongAnswer => 1,
            Verdict::Accepted => 0,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Verdict::Accepted => "AC",
            Verdict::WrongAnswer => "WA",
            Verdict::TimeLimitExceeded => "TLE",
            Verdict::MemoryLimitExceeded => "MLE",
            Verdict::RuntimeError => "RE",
            Verdict::CompileError => "CE",
            Verdict::IllegalOperation => "IO",
            Verdict::CheckerError => "CKE",
            Verdict::JudgeError => "JE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Verdict implied by how the run ended, or `None` for a clean exit whose
/// output still has to be compared.
pub fn verdict_for_termination(t: &TerminationKind) -> Option<Verdict> {
    match t {
        TerminationKind::Exited(0) => None,
        TerminationKind::Exited(_) | TerminationKind::Signaled(_) => Some(Verdict::RuntimeError),
        TerminationKind::CpuTimeViolation | TerminationKind::WallTimeViolation => Some(Verdict::TimeLimitExceeded),
        TerminationKind::MemoryViolation => Some(Verdict::MemoryLimitExceeded),
        TerminationKind::OutputViolation => Some(Verdict::RuntimeError),
        TerminationKind::IllegalSyscall(_) => Some(Verdict::IllegalOperation),
        TerminationKind::IsolationSetupFailure(_) => Some(Verdict::JudgeError),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Equal,
    NotEqual,
}

/// Line endings unified, trailing whitespace stripped per line, trailing
/// blank lines dropped.
pub fn normalize_output(text: &[u8]) -> Vec<u8> {
    let mut lines: Vec<&[u8]> = Vec::new();
    for raw in text.split(|&b| b == b'\n') {
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        let end = line.iter().rposition(|b| !b.is_ascii_whitespace()).map_or(0, |p| p + 1);
        lines.push(&line[..end]);
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join(&b'\n')
}

pub fn compare_outputs(actual: &[u8], expected: &[u8]) -> Comparison {
    if normalize_output(actual) == normalize_output(expected) {
        Comparison::Equal
    } else {
        Comparison::NotEqual
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckerVerdict {
    Accept,
    Reject,
    Error(String),
}

/// The verdict is the last non-empty stdout line, which must be exactly
/// `True` or `False` once surrounding whitespace is removed.
pub fn parse_checker_stdout(stdout: &[u8]) -> CheckerVerdict {
    let text = String::from_utf8_lossy(stdout);
    match text.lines().map(str::trim).rfind(|l| !l.is_empty()) {
        Some("True") => CheckerVerdict::Accept,
        Some("False") => CheckerVerdict::Reject,
        Some(other) => CheckerVerdict::Error(format!("checker printed `{}` instead of True/False", truncate(other, 200))),
        None => CheckerVerdict::Error("checker printed nothing".into()),
    }
}

/// Prepares a checker once so it can be run for many cases.
pub fn prepare_checker(engine: &Engine, checker: &CheckerProgram) -> Result<CompiledArtifact, JudgeError> {
    let profile = engine.resolve(CHECKER_LANGUAGE)?;
    match compile(engine, &checker.source, &profile)? {
        CompileResult::Ok(a) => Ok(a),
        CompileResult::Failure(log) => Err(JudgeError::InvalidSuite(format!("checker does not build: {log}"))),
    }
}

/// Runs `checker` with `argv = [input, actual, reference]`.
pub fn run_checker(
    engine: &Engine,
    checker: &CheckerProgram,
    input: &[u8],
    actual: &[u8],
    reference: &[u8],
    limits: &ExecutionLimits,
) -> CheckerVerdict {
    if checker.source.trim().is_empty() {
        return CheckerVerdict::Error("checker source is empty".into());
    }
    match prepare_checker(engine, checker) {
        Ok(artifact) => run_prepared_checker(engine, &artifact, input, actual, reference, limits),
        Err(e) => CheckerVerdict::Error(e.to_string()),
    }
}

pub(crate) fn run_prepared_checker(
    engine: &Engine,
    checker: &CompiledArtifact,
    input: &[u8],
    actual: &[u8],
    reference: &[u8],
    limits: &ExecutionLimits,
) -> CheckerVerdict {
    let mut args = Vec::with_capacity(3);
    for (name, bytes) in [("input", input), ("output", actual), ("reference", reference)] {
        if bytes.len() > MAX_CHECKER_ARG_BYTES {
            return CheckerVerdict::Error(format!("{name} exceeds the {MAX_CHECKER_ARG_BYTES}-byte argument limit"));
        }
        if bytes.contains(&0) {
            return CheckerVerdict::Error(format!("{name} contains a NUL byte"));
        }
        args.push(String::from_utf8_lossy(bytes).into_owned());
    }
    let out = match engine.run_artifact(checker, b"", limits, &args) {
        Ok(o) => o,
        Err(e) => return CheckerVerdict::Error(format!("checker could not run: {e}")),
    };
    if !out.termination.is_clean_exit() {
        return CheckerVerdict::Error(format!(
            "checker {}: {}",
            out.termination,
            truncate(out.stderr_lossy().trim_end(), 2000)
        ));
    }
    parse_checker_stdout(&out.stdout)
}

/// Verdict of one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<ResourceUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub problem_id: String,
    pub language: String,
    pub per_case: Vec<CaseResult>,
    pub pass_count: usize,
    pub total: usize,
    pub pass_rate: f64,
    pub aggregate: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_log: Option<String>,
}

impl JudgeReport {
    fn assemble(suite: &TestSuite, language: &str, per_case: Vec<CaseResult>, compile_log: Option<String>) -> Self {
        let total = suite.cases.len();
        let pass_count = per_case.iter().filter(|c| c.verdict == Verdict::Accepted).count();
        Self {
            problem_id: suite.problem_id.clone(),
            language: language.to_string(),
            aggregate: aggregate_verdict(per_case.iter().map(|c| c.verdict)),
            pass_rate: pass_count as f64 / total as f64,
            pass_count,
            total,
            per_case,
            compile_log,
        }
    }

    pub fn all_accepted(&self) -> bool {
        self.pass_count == self.total
    }

    /// The report without timing and memory figures, which vary run to run.
    pub fn without_usage(&self) -> JudgeReport {
        let mut r = self.clone();
        for c in &mut r.per_case {
            c.usage = None;
        }
        r
    }
}

/// Highest-precedence verdict; the earliest case wins ties.
pub fn aggregate_verdict(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut best = Verdict::Accepted;
    for v in verdicts {
        if v.precedence() > best.precedence() {
            best = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOptions {
    pub parallelism: usize,
    /// Stop after the first non-accepted case.
    pub early_stop: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        Self { parallelism: 1, early_stop: false }
    }
}

impl JudgeOptions {
    pub fn parallel(parallelism: usize) -> Self {
        Self { parallelism, early_stop: false }
    }
}

/// Judges one case. The suite's checker, when present, decides correctness.
pub fn judge_case(
    engine: &Engine,
    artifact: &CompiledArtifact,
    case: &TestCase,
    suite: &TestSuite,
) -> (Verdict, ResourceUsage) {
    let checker = match &suite.checker {
        Some(c) => match prepare_checker(engine, c) {
            Ok(a) => Some(a),
            Err(e) => {
                let r = judge_one(engine, artifact, 0, case, &suite.limits, None);
                let v = if r.verdict == Verdict::Accepted { Verdict::CheckerError } else { r.verdict };
                log::warn!("checker unusable: {e}");
                return (v, r.usage.unwrap_or_default());
            }
        },
        None => None,
    };
    let r = judge_one(engine, artifact, 0, case, &suite.limits, checker.as_ref());
    (r.verdict, r.usage.unwrap_or_default())
}

fn judge_one(
    engine: &Engine,
    artifact: &CompiledArtifact,
    index: usize,
    case: &TestCase,
    limits: &ExecutionLimits,
    checker: Option<&CompiledArtifact>,
) -> CaseResult {
    let out = match engine.run_artifact(artifact, case.input.as_bytes(), limits, &[]) {
        Ok(o) => o,
        Err(e) => {
            return CaseResult { index, verdict: Verdict::JudgeError, usage: None, detail: Some(e.to_string()) };
        }
    };
    let usage = Some(out.usage);
    if let Some(verdict) = verdict_for_termination(&out.termination) {
        return CaseResult { index, verdict, usage, detail: Some(out.termination.to_string()) };
    }
    let (verdict, detail) = match checker {
        Some(ck) => {
            let ck_limits = *engine.checker_limits();
            match run_prepared_checker(engine, ck, case.input.as_bytes(), &out.stdout, case.expected_output.as_bytes(), &ck_limits) {
                CheckerVerdict::Accept => (Verdict::Accepted, None),
                CheckerVerdict::Reject => (Verdict::WrongAnswer, None),
                CheckerVerdict::Error(e) => (Verdict::CheckerError, Some(e)),
            }
        }
        None => match compare_outputs(&out.stdout, case.expected_output.as_bytes()) {
            Comparison::Equal => (Verdict::Accepted, None),
            Comparison::NotEqual => (Verdict::WrongAnswer, None),
        },
    };
    CaseResult { index, verdict, usage, detail }
}

/// Compiles `source` once and judges it against every case of `suite`.
pub fn judge_suite(
    engine: &Engine,
    source: &str,
    language: &str,
    suite: &TestSuite,
    opts: JudgeOptions,
) -> Result<JudgeReport, JudgeError> {
    if suite.cases.is_empty() {
        return Err(JudgeError::EmptySuite(suite.problem_id.clone()));
    }
    let profile = engine.resolve(language)?;
    match compile(engine, source, &profile)? {
        CompileResult::Ok(artifact) => judge_artifact(engine, &artifact, suite, opts),
        CompileResult::Failure(log) => Ok(compile_error_report(suite, &profile.name, log)),
    }
}

pub fn compile_error_report(suite: &TestSuite, language: &str, log: String) -> JudgeReport {
    let per_case = (0..suite.cases.len())
        .map(|index| CaseResult { index, verdict: Verdict::CompileError, usage: None, detail: None })
        .collect();
    JudgeReport::assemble(suite, language, per_case, Some(log))
}

/// Judges an already compiled artifact.
pub fn judge_artifact(
    engine: &Engine,
    artifact: &CompiledArtifact,
    suite: &TestSuite,
    opts: JudgeOptions,
) -> Result<JudgeReport, JudgeError> {
    let total = suite.cases.len();
    if total == 0 {
        return Err(JudgeError::EmptySuite(suite.problem_id.clone()));
    }
    let checker = match &suite.checker {
        Some(c) => match prepare_checker(engine, c) {
            Ok(a) => Some(a),
            Err(e) => {
                // an unusable checker can never accept
                let per_case = (0..total)
                    .map(|index| CaseResult {
                        index,
                        verdict: Verdict::CheckerError,
                        usage: None,
                        detail: Some(e.to_string()),
                    })
                    .collect();
                return Ok(JudgeReport::assemble(suite, artifact.profile_name(), per_case, None));
            }
        },
        None => None,
    };

    let results = for_each_parallel(total, opts.parallelism, opts.early_stop, |i| {
        let r = judge_one(engine, artifact, i, &suite.cases[i], &suite.limits, checker.as_ref());
        let ok = r.verdict == Verdict::Accepted;
        (r, ok)
    });
    Ok(JudgeReport::assemble(suite, artifact.profile_name(), results, None))
}

/// Runs `job` over `0..n` on up to `parallelism` threads and returns results
/// in index order. With `early_stop`, results end at the first index whose
/// job reported failure; which indices get judged is still deterministic.
pub(crate) fn for_each_parallel<T, F>(n: usize, parallelism: usize, early_stop: bool, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> (T, bool) + Sync,
{
    let workers = parallelism.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let first_failure = AtomicUsize::new(usize::MAX);
    let slots: Arc<Mutex<Vec<Option<T>>>> = Arc::new(Mutex::new((0..n).map(|_| None).collect()));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n || (early_stop && i > first_failure.load(Ordering::SeqCst)) {
                    break;
                }
                let (value, ok) = job(i);
                if !ok && early_stop {
                    first_failure.fetch_min(i, Ordering::SeqCst);
                }
                slots.lock().unwrap()[i] = Some(value);
            });
        }
    });
    let cut = if early_stop { first_failure.load(Ordering::SeqCst).saturating_add(1).min(n) } else { n };
    let mut slots = std::mem::take(&mut *slots.lock().unwrap());
    slots.truncate(cut);
    slots.into_iter().map(|v| v.expect("every index below the cut is judged")).collect()
}

fn truncate(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}
