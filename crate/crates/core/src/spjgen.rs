//! Special-judge checkers: ask the LLM whether a problem needs one, have a
//! second request review it, then measure it against gold outputs.

use std::sync::OnceLock;

use judgekit_sandbox::TerminationKind;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::SpjError;
use crate::judge::{for_each_parallel, prepare_checker, run_prepared_checker, CheckerVerdict};
use crate::llm::LlmClient;
use crate::model::{CheckerProgram, CheckerStage, Problem, Solution, TestSuite};
use crate::prompts;
use crate::toolchain::{compile, CompileResult};

/// A checker is valid when it accepts more than this share of gold outputs.
pub const VALIDITY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerDecision {
    pub needed: bool,
    pub reason: String,
}

pub fn is_valid_pass_rate(rate: f64) -> bool {
    rate > VALIDITY_THRESHOLD
}

fn yes_no(reply: &str, question: &Regex, stage: &'static str) -> Result<bool, SpjError> {
    let caps = question.captures(reply).ok_or_else(|| SpjError::Pipeline {
        stage,
        reason: "no Yes/No answer line".into(),
        raw: reply.to_string(),
    })?;
    Ok(caps[1].eq_ignore_ascii_case("yes"))
}

fn reason(reply: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?im)^[\s*#>-]*reason[\s*]*[:：]\s*(.*)$").unwrap());
    re.captures(reply)
        .map(|c| c[1].trim().trim_matches('*').trim().to_string())
        .filter(|r| !r.is_empty())
        .unwrap_or_else(|| "no reason given".into())
}

/// The script in a reply, taken from a fenced block or, failing that, from
/// the first line that looks like Python code.
fn script(reply: &str) -> Option<String> {
    if reply.contains("```") {
        let code = prompts::extract_code(reply);
        return (!code.trim().is_empty()).then_some(code);
    }
    let start = reply
        .lines()
        .position(|l| l.starts_with("import ") || l.starts_with("from ") || l.starts_with("def "))?;
    let code: Vec<&str> = reply.lines().skip(start).collect();
    Some(code.join("\n") + "\n")
}

fn protocol_script(reply: &str, stage: &'static str) -> Result<String, SpjError> {
    let fail = |reason: &str| SpjError::Pipeline { stage, reason: reason.into(), raw: reply.to_string() };
    let code = script(reply).ok_or_else(|| fail("answer is Yes but no script was found"))?;
    if !code.contains("sys.argv") || !code.contains("def is_valid_output") {
        return Err(fail("script does not follow the checker protocol (sys.argv and is_valid_output)"));
    }
    Ok(code)
}

/// Parses a stage-one reply.
pub fn parse_generation_reply(reply: &str) -> Result<(CheckerDecision, Option<CheckerProgram>), SpjError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?im)^[\s*#>-]*whether\s+(a\s+)?custom\s+checker\s+is\s+needed[\s*]*[:：][\s*]*(yes|no)\b")
            .unwrap()
    });
    let caps = re.captures(reply).ok_or_else(|| SpjError::Pipeline {
        stage: "generation",
        reason: "no `Whether custom checker is needed` line".into(),
        raw: reply.to_string(),
    })?;
    let needed = caps[2].eq_ignore_ascii_case("yes");
    let decision = CheckerDecision { needed, reason: reason(reply) };
    if !needed {
        return Ok((decision, None));
    }
    let code = protocol_script(reply, "generation")?;
    Ok((decision, Some(CheckerProgram::new(code))))
}

/// Parses a stage-two reply about `checker`.
pub fn parse_review_reply(reply: &str, checker: &CheckerProgram) -> Result<CheckerProgram, SpjError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?im)^[\s*#>-]*does\s+the\s+checker\s+have\s+(?:any\s+)?problems\??[\s*]*[:：]?[\s*]*(yes|no)\b")
            .unwrap()
    });
    let broken = yes_no(reply, re, "review")?;
    let source = if broken { protocol_script(reply, "review")? } else { checker.source.clone() };
    Ok(CheckerProgram { source, stage: CheckerStage::Repaired, validation_pass_rate: None, valid: None })
}

/// Stage one: decide whether a checker is needed and obtain one if so.
pub fn generate_checker(problem: &Problem, llm: &dyn LlmClient) -> Result<(CheckerDecision, Option<CheckerProgram>), SpjError> {
    let reply = llm.complete(&prompts::checker_generation_prompt(problem))?;
    parse_generation_reply(&reply)
}

/// Stage two: review a freshly generated checker.
pub fn review_checker(problem: &Problem, checker: &CheckerProgram, llm: &dyn LlmClient) -> Result<CheckerProgram, SpjError> {
    if checker.stage != CheckerStage::Generated {
        return Err(SpjError::WrongStage);
    }
    let reply = llm.complete(&prompts::checker_review_prompt(problem, &checker.source))?;
    parse_review_reply(&reply, checker)
}

/// Runs `gold` on every case and asks the checker to judge the gold output
/// against the case's reference answer. Records the acceptance rate and
/// validity; a gold failure means the suite itself is inconsistent.
pub fn validate_checker(
    engine: &Engine,
    checker: &CheckerProgram,
    suite: &TestSuite,
    gold: &Solution,
    parallelism: usize,
) -> Result<CheckerProgram, SpjError> {
    if suite.cases.is_empty() {
        return Err(SpjError::EmptySuite);
    }
    let profile = engine.resolve(&gold.language)?;
    let artifact = match compile(engine, &gold.source, &profile)? {
        CompileResult::Ok(a) => a,
        CompileResult::Failure(log) => return Err(SpjError::GoldFailed { case: 0, detail: format!("compile error:\n{log}") }),
    };
    let prepared = prepare_checker(engine, checker)?;
    let results = for_each_parallel(suite.cases.len(), parallelism, false, |i| {
        let case = &suite.cases[i];
        let out = match engine.run_artifact(&artifact, case.input.as_bytes(), &suite.limits, &[]) {
            Ok(o) => o,
            Err(e) => return (Err(SpjError::GoldFailed { case: i, detail: e.to_string() }), true),
        };
        if out.termination != TerminationKind::Exited(0) {
            let detail = format!("{}: {}", out.termination, out.stderr_lossy().trim_end());
            return (Err(SpjError::GoldFailed { case: i, detail }), true);
        }
        let v = run_prepared_checker(
            engine,
            &prepared,
            case.input.as_bytes(),
            &out.stdout,
            case.expected_output.as_bytes(),
            engine.checker_limits(),
        );
        if let CheckerVerdict::Error(e) = &v {
            log::debug!("checker error on case {i}: {e}");
        }
        (Ok(v == CheckerVerdict::Accept), true)
    });
    let mut accepted = 0usize;
    for r in results {
        accepted += usize::from(r?);
    }
    let rate = accepted as f64 / suite.cases.len() as f64;
    Ok(CheckerProgram {
        validation_pass_rate: Some(rate),
        valid: Some(is_valid_pass_rate(rate)),
        ..checker.clone()
    })
}

/// Everything the two-stage pipeline produced for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpjOutcome {
    pub problem_id: String,
    pub decision: CheckerDecision,
    /// Stage-one checker with its measured validity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<CheckerProgram>,
    /// Stage-two checker with its measured validity; this is the one to use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repaired: Option<CheckerProgram>,
}

impl SpjOutcome {
    pub fn checker(&self) -> Option<&CheckerProgram> {
        self.repaired.as_ref()
    }
}

/// Generation, review and validation of both stages against `suite`.
pub fn run_pipeline(
    engine: &Engine,
    problem: &Problem,
    llm: &dyn LlmClient,
    suite: &TestSuite,
    gold: &Solution,
    parallelism: usize,
) -> Result<SpjOutcome, SpjError> {
    let (decision, generated) = generate_checker(problem, llm)?;
    let Some(generated) = generated else {
        return Ok(SpjOutcome { problem_id: problem.id.clone(), decision, generated: None, repaired: None });
    };
    let repaired = review_checker(problem, &generated, llm)?;
    let generated = validate_checker(engine, &generated, suite, gold, parallelism)?;
    let repaired = validate_checker(engine, &repaired, suite, gold, parallelism)?;
    Ok(SpjOutcome { problem_id: problem.id.clone(), decision, generated: Some(generated), repaired: Some(repaired) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SCRIPT: &str = "```python\nimport sys\ndef is_valid_output(i, o, r):\n    return o.split() == r.split()\n\ndef main():\n    print(is_valid_output(sys.argv[1], sys.argv[2], sys.argv[3]))\nmain()\n```";

    #[test]
    fn generation_replies() {
        let (d, c) = parse_generation_reply("Whether custom checker is needed: No\n\nReason: the sum is unique.").unwrap();
        assert!(!d.needed && c.is_none());
        assert_eq!(d.reason, "the sum is unique.");

        let reply = format!("**Whether custom checker is needed: Yes**\nReason: many answers.\n{SCRIPT}");
        let (d, c) = parse_generation_reply(&reply).unwrap();
        assert!(d.needed);
        let c = c.unwrap();
        assert!(c.source.starts_with("import sys"));
        assert_eq!(c.stage, CheckerStage::Generated);

        let (d, _) = parse_generation_reply("Whether custom checker is needed: no").unwrap();
        assert_eq!(d.reason, "no reason given");
    }

    #[test]
    fn malformed_generation_replies_keep_raw_text() {
        for bad in ["I think so.", "Whether custom checker is needed: Yes\nReason: x\n```python\nprint(True)\n```"] {
            match parse_generation_reply(bad) {
                Err(SpjError::Pipeline { raw, .. }) => assert_eq!(raw, bad),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn review_replies() {
        let c = CheckerProgram::new("import sys\n# old\ndef is_valid_output(a,b,c): return True\n");
        let same = parse_review_reply("Does the checker have problems: No\nReason: fine", &c).unwrap();
        assert_eq!(same.source, c.source);
        assert_eq!(same.stage, CheckerStage::Repaired);
        let fixed = parse_review_reply(&format!("Does the Checker have problems: Yes\nReason: lax\n{SCRIPT}"), &c).unwrap();
        assert!(fixed.source.contains("split()"));
        assert!(parse_review_reply("looks fine", &c).is_err());
    }

    #[test]
    fn gate_is_strict() {
        assert!(is_valid_pass_rate(96.0 / 100.0));
        assert!(!is_valid_pass_rate(95.0 / 100.0));
        assert!(is_valid_pass_rate(1.0));
    }

    proptest! {
        #[test]
        fn gate_matches_integer_comparison(accepted in 0usize..=200, extra in 0usize..200) {
            let total = accepted + extra;
            prop_assume!(total > 0);
            let rate = accepted as f64 / total as f64;
            prop_assert!((0.0..=1.0).contains(&rate));
            prop_assert_eq!(is_valid_pass_rate(rate), accepted * 100 > total * 95);
        }
    }
}
