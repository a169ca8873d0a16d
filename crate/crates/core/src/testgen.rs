//! Test-suite synthesis: LLM-written generators produce candidate inputs,
//! and an input is kept only when two gold solutions agree on it.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use judgekit_sandbox::{ExecutionLimits, TerminationKind};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::TestgenError;
use crate::judge::{compare_outputs, for_each_parallel, judge_artifact, prepare_checker, run_prepared_checker};
use crate::judge::{CheckerVerdict, Comparison, JudgeOptions};
use crate::llm::LlmClient;
use crate::model::{CaseKind, CaseOrigin, Problem, Solution, TestCase, TestSuite};
use crate::prompts::{self, EXECUTION_ERROR_HEADING, FORMAT_ERROR_HEADING};
use crate::toolchain::{compile, CompileResult, CompiledArtifact};

/// Language generator programs are written in.
pub const GENERATOR_LANGUAGE: &str = "python3";

const EXCERPT: usize = 1500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub regular_count: usize,
    pub corner_count: usize,
    pub max_rounds: u32,
    pub generator_limits: ExecutionLimits,
    /// Concurrent sandbox runs while validating one batch of inputs.
    pub parallelism: usize,
    /// Fixes the gold pair instead of timing the golds on public tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_pair: Option<(usize, usize)>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            regular_count: 80,
            corner_count: 20,
            max_rounds: 3,
            generator_limits: ExecutionLimits::unlimited(),
            parallelism: 1,
            gold_pair: None,
        }
    }
}

impl SynthesisConfig {
    pub fn quota(&self, kind: CaseKind) -> usize {
        match kind {
            CaseKind::Regular => self.regular_count,
            CaseKind::Corner => self.corner_count,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.regular_count == 0 || self.corner_count == 0 {
            return Err("case counts must be positive".into());
        }
        if self.max_rounds == 0 {
            return Err("max_rounds must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackCategory {
    FormatError,
    GeneratorExecutionError,
    TimeLimit,
    MemoryLimit,
    InconsistentOutput,
    Other,
}

impl FeedbackCategory {
    /// Failures found while running the generator, as opposed to while
    /// validating its inputs.
    pub fn is_execution_stage(self) -> bool {
        matches!(self, FeedbackCategory::FormatError | FeedbackCategory::GeneratorExecutionError)
    }

    fn heading(self) -> &'static str {
        match self {
            FeedbackCategory::FormatError => FORMAT_ERROR_HEADING,
            FeedbackCategory::GeneratorExecutionError => EXECUTION_ERROR_HEADING,
            FeedbackCategory::TimeLimit => "Time limit",
            FeedbackCategory::MemoryLimit => "Memory limit",
            FeedbackCategory::InconsistentOutput => "Inconsistent output",
            FeedbackCategory::Other => "Other error",
        }
    }
}

impl fmt::Display for FeedbackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub category: FeedbackCategory,
    pub detail: String,
}

impl FeedbackRecord {
    pub fn new(category: FeedbackCategory, detail: impl Into<String>) -> Self {
        Self { category, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorProgram {
    pub kind: CaseKind,
    pub source: String,
    pub round: u32,
    pub feedback_history: Vec<FeedbackRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestInput {
    pub input: String,
    pub kind: CaseKind,
}

/// One line of the synthesis log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisLogEntry {
    pub problem_id: String,
    pub kind: CaseKind,
    pub round: u32,
    pub category: FeedbackCategory,
    pub detail: String,
}

/// Whether the first input line is a test count: the problem's override, or
/// a keyword scan of the input format (the statement when that is empty).
pub fn detect_multi_test(problem: &Problem) -> bool {
    if let Some(v) = problem.multi_test {
        return v;
    }
    static PATTERNS: OnceLock<Regex> = OnceLock::new();
    let re = PATTERNS.get_or_init(|| {
        Regex::new(
            r"(?ix)
            (number|count)\s+of\s+(test\s*cases|tests|testcases|test\s+data\s+sets|data\s+sets)
            | (multiple|several)\s+test\s*cases
            | first\s+line\s+(of\s+(the\s+)?input\s+)?contains\s+(a\s+single|an|one|the)?\s*(positive\s+)?(integer\s+)?\$?t\$?\b\s*[(,.$-]",
        )
        .expect("valid regex")
    });
    let text = if problem.input_format.trim().is_empty() { &problem.statement } else { &problem.input_format };
    re.is_match(text)
}

/// Generator request for `kind`; with `repair`, asks to fix the given
/// generator in light of the feedback record.
pub fn build_generator_prompt(
    problem: &Problem,
    gold: &Solution,
    kind: CaseKind,
    repair: Option<(&str, &FeedbackRecord)>,
) -> String {
    match repair {
        None => prompts::generator_prompt(problem, gold, kind, detect_multi_test(problem)),
        Some((generator, fb)) => prompts::repair_prompt(
            problem,
            generator,
            fb.category.heading(),
            &fb.detail,
            fb.category.is_execution_stage(),
        ),
    }
}

/// Parses generator stdout: a JSON array of strings, or failing that the
/// last non-empty line as a JSON array or Python list literal.
pub fn parse_generator_output(stdout: &str) -> Result<Vec<String>, String> {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(stdout.trim()) {
        return json_strings(&v);
    }
    let Some(last) = stdout.lines().map(str::trim).rfind(|l| !l.is_empty()) else {
        return Err("generator printed nothing".into());
    };
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(last) {
        return json_strings(&v);
    }
    parse_python_str_list(last).map_err(|e| {
        format!(
            "expected a list of strings on the last line of output ({e}); last line was: {}",
            excerpt(last, 300)
        )
    })
}

fn json_strings(v: &serde_json::Value) -> Result<Vec<String>, String> {
    let arr = v.as_array().ok_or("output is JSON but not a list")?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| x.as_str().map(str::to_string).ok_or_else(|| format!("element {i} is not a string: {x}")))
        .collect()
}

/// Parses a Python list of string literals, as printed by `print(list)`.
pub fn parse_python_str_list(text: &str) -> Result<Vec<String>, String> {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    if chars.first() != Some(&'[') {
        return Err("not a list literal".into());
    }
    i += 1;
    let mut out = Vec::new();
    loop {
        skip_ws(&mut i);
        match chars.get(i) {
            Some(']') => {
                i += 1;
                break;
            }
            Some(_) => {}
            None => return Err("unterminated list".into()),
        }
        let mut raw = false;
        while let Some(c) = chars.get(i) {
            match c.to_ascii_lowercase() {
                'r' => raw = true,
                'u' => {}
                _ => break,
            }
            i += 1;
        }
        let quote = match chars.get(i) {
            Some(q @ ('\'' | '"')) => *q,
            _ => return Err(format!("element {} is not a string literal", out.len())),
        };
        i += 1;
        let mut s = String::new();
        loop {
            let c = *chars.get(i).ok_or("unterminated string")?;
            i += 1;
            if c == quote {
                break;
            }
            if c != '\\' {
                s.push(c);
                continue;
            }
            let e = *chars.get(i).ok_or("dangling escape")?;
            i += 1;
            if raw {
                s.push('\\');
                s.push(e);
                continue;
            }
            match e {
                'n' => s.push('\n'),
                't' => s.push('\t'),
                'r' => s.push('\r'),
                '0' => s.push('\0'),
                '\\' | '\'' | '"' => s.push(e),
                '\n' => {}
                'x' | 'u' | 'U' => {
                    let width = match e {
                        'x' => 2,
                        'u' => 4,
                        _ => 8,
                    };
                    let hex: String = chars.get(i..i + width).ok_or("short escape")?.iter().collect();
                    let code = u32::from_str_radix(&hex, 16).map_err(|_| format!("bad escape \\{e}{hex}"))?;
                    s.push(char::from_u32(code).ok_or("escape is not a character")?);
                    i += width;
                }
                other => {
                    s.push('\\');
                    s.push(other);
                }
            }
        }
        out.push(s);
        skip_ws(&mut i);
        match chars.get(i) {
            Some(',') => i += 1,
            Some(']') => {}
            _ => return Err("expected `,` or `]`".into()),
        }
    }
    skip_ws(&mut i);
    if i != chars.len() {
        return Err("trailing text after list".into());
    }
    Ok(out)
}

/// Result of running a generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorOutcome {
    Inputs(Vec<TestInput>),
    Failed(FeedbackRecord),
}

/// Runs a generator without cpu or memory caps and parses its output.
/// Empty inputs are dropped and a missing final newline is added.
pub fn run_generator(engine: &Engine, gen: &GeneratorProgram, config: &SynthesisConfig) -> Result<GeneratorOutcome, TestgenError> {
    let profile = engine.resolve(GENERATOR_LANGUAGE)?;
    let artifact = match compile(engine, &gen.source, &profile)? {
        CompileResult::Ok(a) => a,
        CompileResult::Failure(log) => {
            return Ok(GeneratorOutcome::Failed(FeedbackRecord::new(FeedbackCategory::GeneratorExecutionError, log)))
        }
    };
    let out = engine.run_artifact(&artifact, b"", &config.generator_limits, &[])?;
    match &out.termination {
        TerminationKind::Exited(0) => {}
        TerminationKind::IsolationSetupFailure(why) => return Err(TestgenError::Infrastructure(why.clone())),
        other => {
            let stderr = out.stderr_lossy();
            let detail = format!("generator {other}\n{}", tail(stderr.trim_end(), EXCERPT));
            return Ok(GeneratorOutcome::Failed(FeedbackRecord::new(FeedbackCategory::GeneratorExecutionError, detail)));
        }
    }
    let parsed = match parse_generator_output(&out.stdout_lossy()) {
        Ok(v) => v,
        Err(e) => return Ok(GeneratorOutcome::Failed(FeedbackRecord::new(FeedbackCategory::FormatError, e))),
    };
    let inputs: Vec<TestInput> = parsed
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .map(|mut input| {
            if !input.ends_with('\n') {
                input.push('\n');
            }
            TestInput { input, kind: gen.kind }
        })
        .collect();
    if inputs.is_empty() {
        return Ok(GeneratorOutcome::Failed(FeedbackRecord::new(
            FeedbackCategory::FormatError,
            "the list contained no non-empty inputs",
        )));
    }
    Ok(GeneratorOutcome::Inputs(inputs))
}

/// Two compiled gold solutions used as the output oracle.
#[derive(Debug, Clone)]
pub struct GoldPair {
    pub indices: (usize, usize),
    pub first: CompiledArtifact,
    pub second: CompiledArtifact,
    checker: Option<CompiledArtifact>,
}

impl GoldPair {
    pub fn new(engine: &Engine, problem: &Problem, indices: (usize, usize)) -> Result<Self, TestgenError> {
        let first = compile_gold(engine, problem, indices.0)?;
        let second = compile_gold(engine, problem, indices.1)?;
        let checker = match &problem.checker {
            Some(c) => Some(prepare_checker(engine, c)?),
            None => None,
        };
        Ok(Self { indices, first, second, checker })
    }
}

fn compile_gold(engine: &Engine, problem: &Problem, index: usize) -> Result<CompiledArtifact, TestgenError> {
    let gold = problem.gold_solutions.get(index).ok_or_else(|| TestgenError::TooFewGolds(problem.id.clone()))?;
    let profile = engine.resolve(&gold.language)?;
    match compile(engine, &gold.source, &profile)? {
        CompileResult::Ok(a) => Ok(a),
        CompileResult::Failure(log) => Err(TestgenError::GoldCompile { problem: problem.id.clone(), index, log }),
    }
}

/// Picks the two golds with the least total cpu time on the public tests;
/// golds failing a public test rank last. Ties keep the original order.
pub fn select_gold_pair(engine: &Engine, problem: &Problem, config: &SynthesisConfig) -> Result<GoldPair, TestgenError> {
    let n = problem.gold_solutions.len();
    if n < 2 {
        return Err(TestgenError::TooFewGolds(problem.id.clone()));
    }
    if let Some(pair) = config.gold_pair {
        return GoldPair::new(engine, problem, pair);
    }
    if n == 2 || problem.public_tests.is_empty() {
        return GoldPair::new(engine, problem, (0, 1));
    }
    let suite = TestSuite::public(problem);
    let mut ranked = Vec::with_capacity(n);
    for i in 0..n {
        let artifact = compile_gold(engine, problem, i)?;
        let report = judge_artifact(engine, &artifact, &suite, JudgeOptions::parallel(config.parallelism))?;
        let cpu: u64 = report.per_case.iter().filter_map(|c| c.usage.map(|u| u.cpu_time_ms)).sum();
        ranked.push((!report.all_accepted(), cpu, i));
    }
    ranked.sort();
    GoldPair::new(engine, problem, (ranked[0].2, ranked[1].2))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    pub valid: Vec<TestCase>,
    pub rejected: Vec<(TestInput, FeedbackRecord)>,
}

enum GoldRun {
    Output(String),
    Reject(FeedbackRecord),
}

fn run_gold(engine: &Engine, gold: &CompiledArtifact, which: usize, input: &str, limits: &ExecutionLimits) -> Result<GoldRun, TestgenError> {
    let out = engine.run_artifact(gold, input.as_bytes(), limits, &[])?;
    let category = match &out.termination {
        TerminationKind::Exited(0) => return Ok(GoldRun::Output(out.stdout_lossy())),
        TerminationKind::IsolationSetupFailure(why) => return Err(TestgenError::Infrastructure(why.clone())),
        TerminationKind::CpuTimeViolation | TerminationKind::WallTimeViolation => FeedbackCategory::TimeLimit,
        TerminationKind::MemoryViolation => FeedbackCategory::MemoryLimit,
        _ => FeedbackCategory::Other,
    };
    let detail = format!(
        "gold solution {which} ended with {} on input:\n{}\nstderr:\n{}",
        out.termination,
        excerpt(input, EXCERPT),
        tail(out.stderr_lossy().trim_end(), 500)
    );
    Ok(GoldRun::Reject(FeedbackRecord::new(category, detail)))
}

/// Runs every input through both golds under the problem's limits and keeps
/// those whose outputs agree, with the first gold's output as the answer.
pub fn consistency_validate(
    engine: &Engine,
    inputs: &[TestInput],
    problem: &Problem,
    golds: &GoldPair,
    parallelism: usize,
) -> Result<Validation, TestgenError> {
    let limits = problem.limits();
    let results = for_each_parallel(inputs.len(), parallelism, false, |i| {
        (validate_one(engine, &inputs[i], golds, &limits), true)
    });
    let mut v = Validation::default();
    for (input, r) in inputs.iter().zip(results) {
        match r? {
            Ok(output) => v.valid.push(TestCase {
                input: input.input.clone(),
                expected_output: output,
                kind: input.kind,
                origin: CaseOrigin::Generated,
                round: 0,
            }),
            Err(fb) => v.rejected.push((input.clone(), fb)),
        }
    }
    Ok(v)
}

fn validate_one(
    engine: &Engine,
    input: &TestInput,
    golds: &GoldPair,
    limits: &ExecutionLimits,
) -> Result<Result<String, FeedbackRecord>, TestgenError> {
    let a = match run_gold(engine, &golds.first, 1, &input.input, limits)? {
        GoldRun::Output(o) => o,
        GoldRun::Reject(fb) => return Ok(Err(fb)),
    };
    let b = match run_gold(engine, &golds.second, 2, &input.input, limits)? {
        GoldRun::Output(o) => o,
        GoldRun::Reject(fb) => return Ok(Err(fb)),
    };
    let agree = match &golds.checker {
        Some(ck) => {
            match run_prepared_checker(engine, ck, input.input.as_bytes(), b.as_bytes(), a.as_bytes(), engine.checker_limits()) {
                CheckerVerdict::Accept => Ok(true),
                CheckerVerdict::Reject => Ok(false),
                CheckerVerdict::Error(e) => Err(e),
            }
        }
        None => Ok(compare_outputs(a.as_bytes(), b.as_bytes()) == Comparison::Equal),
    };
    match agree {
        Ok(true) => Ok(Ok(a)),
        Ok(false) => Ok(Err(FeedbackRecord::new(
            FeedbackCategory::InconsistentOutput,
            format!(
                "input:\n{}\ngold solution 1 printed:\n{}\ngold solution 2 printed:\n{}",
                excerpt(&input.input, EXCERPT),
                excerpt(&a, 500),
                excerpt(&b, 500)
            ),
        ))),
        Err(e) => Ok(Err(FeedbackRecord::new(FeedbackCategory::Other, format!("checker failed: {e}")))),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundsUsed {
    pub regular: u32,
    pub corner: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub suite: TestSuite,
    pub rounds_used: RoundsUsed,
    pub gold_pair: (usize, usize),
    pub log: Vec<SynthesisLogEntry>,
}

/// Builds a suite of generated cases for `problem`. Each kind gets up to
/// `max_rounds` generator requests; later rounds repair the previous
/// generator using the first failure seen. A kind with no valid case is
/// flagged in the suite, and synthesis fails only if both kinds are empty.
pub fn synthesize_suite(
    engine: &Engine,
    problem: &Problem,
    llm: &dyn LlmClient,
    config: &SynthesisConfig,
) -> Result<SynthesisResult, TestgenError> {
    config.validate().map_err(TestgenError::Infrastructure)?;
    let golds = select_gold_pair(engine, problem, config)?;
    let gold = &problem.gold_solutions[golds.indices.0];
    let mut suite = TestSuite::new(problem.id.clone(), problem.limits(), Vec::new());
    suite.checker = problem.checker.clone();
    let mut log = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut rounds = RoundsUsed::default();

    for kind in [CaseKind::Regular, CaseKind::Corner] {
        let quota = config.quota(kind);
        let mut kept = 0usize;
        let mut history: Vec<FeedbackRecord> = Vec::new();
        let mut previous: Option<String> = None;
        let mut used = 0;
        for round in 1..=config.max_rounds {
            used = round;
            let repair = match (&previous, history.last()) {
                (Some(src), Some(fb)) => Some((src.as_str(), fb)),
                _ => None,
            };
            let prompt = build_generator_prompt(problem, gold, kind, repair);
            let reply = llm.complete(&prompt)?;
            let gen = GeneratorProgram {
                kind,
                source: prompts::extract_code(&reply),
                round,
                feedback_history: history.clone(),
            };
            previous = Some(gen.source.clone());
            let entry = |fb: &FeedbackRecord| SynthesisLogEntry {
                problem_id: problem.id.clone(),
                kind,
                round,
                category: fb.category,
                detail: fb.detail.clone(),
            };

            let inputs = match run_generator(engine, &gen, config)? {
                GeneratorOutcome::Inputs(v) => v,
                GeneratorOutcome::Failed(fb) => {
                    log.push(entry(&fb));
                    history.push(fb);
                    continue;
                }
            };
            let fresh: Vec<TestInput> = inputs
                .into_iter()
                .filter(|t| seen.insert(t.input.clone()))
                .take(quota - kept)
                .collect();
            if fresh.is_empty() {
                let fb = FeedbackRecord::new(FeedbackCategory::Other, "every generated input duplicates an existing case");
                log.push(entry(&fb));
                history.push(fb);
                continue;
            }
            let v = consistency_validate(engine, &fresh, problem, &golds, config.parallelism)?;
            kept += v.valid.len();
            suite.cases.extend(v.valid.into_iter().map(|mut c| {
                c.round = round;
                c
            }));
            let clean = v.rejected.is_empty();
            log.extend(v.rejected.iter().map(|(_, fb)| entry(fb)));
            // only the first rejection steers the repair prompt
            if let Some((_, fb)) = v.rejected.into_iter().next() {
                history.push(fb);
            }
            if clean || kept >= quota {
                break;
            }
        }
        match kind {
            CaseKind::Regular => {
                rounds.regular = used;
                suite.regular_failed = kept == 0;
            }
            CaseKind::Corner => {
                rounds.corner = used;
                suite.corner_failed = kept == 0;
            }
        }
    }

    if suite.cases.is_empty() {
        return Err(TestgenError::SynthesisFailed { problem: problem.id.clone(), history: log });
    }
    Ok(SynthesisResult { suite, rounds_used: rounds, gold_pair: golds.indices, log })
}

fn excerpt(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}... ({} bytes total)", &s[..end], s.len())
}

fn tail(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}
