//! Reading and writing problems and suites.
//!
//! A suite file is either one JSON object or JSONL: a header line holding
//! everything except `cases`, then one case per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::JudgeError;
use crate::model::{CheckerProgram, Problem, TestCase, TestSuite};

#[derive(Serialize, Deserialize)]
struct SuiteHeader {
    problem_id: String,
    #[serde(default)]
    limits: judgekit_sandbox::ExecutionLimits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checker: Option<CheckerProgram>,
    #[serde(default)]
    regular_failed: bool,
    #[serde(default)]
    corner_failed: bool,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Parses a suite and checks its invariants.
pub fn parse_suite(text: &str, jsonl: bool) -> Result<TestSuite, JudgeError> {
    let suite = if jsonl {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: SuiteHeader = match lines.next() {
            Some(l) => serde_json::from_str(l)?,
            None => return Err(JudgeError::InvalidSuite("empty file".into())),
        };
        let cases = lines.map(serde_json::from_str).collect::<Result<Vec<TestCase>, _>>()?;
        TestSuite {
            problem_id: header.problem_id,
            limits: header.limits,
            checker: header.checker,
            cases,
            regular_failed: header.regular_failed,
            corner_failed: header.corner_failed,
        }
    } else {
        serde_json::from_str(text)?
    };
    validate_suite(&suite)?;
    Ok(suite)
}

pub fn validate_suite(suite: &TestSuite) -> Result<(), JudgeError> {
    if suite.problem_id.is_empty() {
        return Err(JudgeError::InvalidSuite("missing problem_id".into()));
    }
    if let Some(i) = suite.cases.iter().position(|c| c.input.trim().is_empty()) {
        return Err(JudgeError::InvalidSuite(format!("case {i} has an empty input")));
    }
    suite.limits.validate().map_err(|e| JudgeError::InvalidSuite(e.to_string()))?;
    Ok(())
}

pub fn load_suite(path: &Path) -> Result<TestSuite, JudgeError> {
    let text = fs::read_to_string(path)?;
    parse_suite(&text, is_jsonl(path))
}

pub fn save_suite(path: &Path, suite: &TestSuite) -> Result<(), JudgeError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if is_jsonl(path) {
        let header = SuiteHeader {
            problem_id: suite.problem_id.clone(),
            limits: suite.limits,
            checker: suite.checker.clone(),
            regular_failed: suite.regular_failed,
            corner_failed: suite.corner_failed,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for case in &suite.cases {
            serde_json::to_writer(&mut w, case)?;
            writeln!(w)?;
        }
    } else {
        serde_json::to_writer_pretty(&mut w, suite)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records from a JSONL file, or from a JSON array when the file
/// starts with `[`.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JudgeError> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut out = Vec::new();
    for line in BufReader::new(text.as_bytes()).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JudgeError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_problems(path: &Path) -> Result<Vec<Problem>, JudgeError> {
    read_records(path)
}
