use std::fmt;

use judgekit_sandbox::{ExecutionLimits, MIB};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIME_LIMIT_MS: u64 = 2_000;
pub const DEFAULT_MEMORY_LIMIT_BYTES: u64 = 256 * MIB;

/// A program in some guest language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub language: String,
    pub source: String,
}

impl Solution {
    pub fn new(language: impl Into<String>, source: impl Into<String>) -> Self {
        Self { language: language.into(), source: source.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    #[default]
    Regular,
    Corner,
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseKind::Regular => "regular",
            CaseKind::Corner => "corner",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrigin {
    #[default]
    Public,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    #[serde(rename = "output")]
    pub expected_output: String,
    #[serde(default)]
    pub kind: CaseKind,
    #[serde(default)]
    pub origin: CaseOrigin,
    /// Generation round that produced the case; 0 for public cases.
    #[serde(default)]
    pub round: u32,
}

impl TestCase {
    pub fn public(input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: output.into(),
            kind: CaseKind::Regular,
            origin: CaseOrigin::Public,
            round: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerStage {
    #[default]
    Generated,
    Repaired,
}

/// A special-judge script speaking the `argv = [input, output, reference]`
/// protocol and printing `True` or `False`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerProgram {
    pub source: String,
    #[serde(default)]
    pub stage: CheckerStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_pass_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<bool>,
}

impl CheckerProgram {
    pub fn new(source: impl Into<String>) -> Self {
        Self { source: source.into(), stage: CheckerStage::Generated, validation_pass_rate: None, valid: None }
    }
}

/// A curated contest problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub input_format: String,
    #[serde(default)]
    pub output_format: String,
    #[serde(default)]
    pub examples: Vec<Example>,
    #[serde(default = "default_time_limit")]
    pub time_limit_ms: u64,
    #[serde(default = "default_memory_limit")]
    pub memory_limit_bytes: u64,
    pub gold_solutions: Vec<Solution>,
    #[serde(default)]
    pub public_tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<CheckerProgram>,
    /// Overrides detection of "first line is the number of test cases".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_test: Option<bool>,
}

fn default_time_limit() -> u64 {
    DEFAULT_TIME_LIMIT_MS
}

fn default_memory_limit() -> u64 {
    DEFAULT_MEMORY_LIMIT_BYTES
}

impl Problem {
    pub fn limits(&self) -> ExecutionLimits {
        ExecutionLimits::for_problem(self.time_limit_ms, self.memory_limit_bytes)
    }

    /// Examples rendered the way prompts and the anti-hack filter see them.
    pub fn examples_text(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.examples.iter().enumerate() {
            out.push_str(&format!("Example {} input:\n{}\nExample {} output:\n{}\n", i + 1, ex.input, i + 1, ex.output));
        }
        out
    }
}

/// Cases for one problem plus the constraints they are judged under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub problem_id: String,
    #[serde(default)]
    pub limits: ExecutionLimits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<CheckerProgram>,
    pub cases: Vec<TestCase>,
    /// Set when synthesis produced no valid case of that kind.
    #[serde(default, skip_serializing_if = "is_false")]
    pub regular_failed: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub corner_failed: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl TestSuite {
    pub fn new(problem_id: impl Into<String>, limits: ExecutionLimits, cases: Vec<TestCase>) -> Self {
        Self {
            problem_id: problem_id.into(),
            limits,
            checker: None,
            cases,
            regular_failed: false,
            corner_failed: false,
        }
    }

    /// The problem's public tests as a suite.
    pub fn public(problem: &Problem) -> Self {
        let mut s = Self::new(problem.id.clone(), problem.limits(), problem.public_tests.clone());
        s.checker = problem.checker.clone();
        s
    }

    pub fn count(&self, kind: CaseKind) -> usize {
        self.cases.iter().filter(|c| c.kind == kind).count()
    }
}
