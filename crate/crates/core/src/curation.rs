//! Corpus curation: duplicate removal, eligibility, gold verification and
//! the public-sample anti-hack filter, applied in that order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::JudgeError;
use crate::judge::{for_each_parallel, judge_suite, JudgeOptions};
use crate::model::{CheckerProgram, Example, Problem, Solution, TestCase, TestSuite};
use crate::model::{DEFAULT_MEMORY_LIMIT_BYTES, DEFAULT_TIME_LIMIT_MS};

/// A corpus record before curation; every field may be missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawProblem {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    #[serde(default)]
    pub statement: Option<String>,
    #[serde(default)]
    pub input_format: Option<String>,
    #[serde(default)]
    pub output_format: Option<String>,
    #[serde(default)]
    pub examples: Vec<Example>,
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
    #[serde(default)]
    pub memory_limit_bytes: Option<u64>,
    #[serde(default)]
    pub gold_solutions: Vec<Solution>,
    #[serde(default)]
    pub public_tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<CheckerProgram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_test: Option<bool>,
    /// How programs read input: `stdin`, `function`, `file`... When absent
    /// it is inferred from the gold solutions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io: Option<String>,
}

impl From<Problem> for RawProblem {
    fn from(p: Problem) -> Self {
        Self {
            id: Some(p.id),
            source_tag: None,
            statement: Some(p.statement),
            input_format: Some(p.input_format),
            output_format: Some(p.output_format),
            examples: p.examples,
            time_limit_ms: Some(p.time_limit_ms),
            memory_limit_bytes: Some(p.memory_limit_bytes),
            gold_solutions: p.gold_solutions,
            public_tests: p.public_tests,
            checker: p.checker,
            multi_test: p.multi_test,
            io: None,
        }
    }
}

impl RawProblem {
    fn into_problem(self, golds: Vec<Solution>) -> Problem {
        Problem {
            id: self.id.unwrap_or_default(),
            statement: self.statement.unwrap_or_default(),
            input_format: self.input_format.unwrap_or_default(),
            output_format: self.output_format.unwrap_or_default(),
            examples: self.examples,
            time_limit_ms: self.time_limit_ms.unwrap_or(DEFAULT_TIME_LIMIT_MS),
            memory_limit_bytes: self.memory_limit_bytes.unwrap_or(DEFAULT_MEMORY_LIMIT_BYTES),
            gold_solutions: golds,
            public_tests: self.public_tests,
            checker: self.checker,
            multi_test: self.multi_test,
        }
    }

    fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| "<no id>".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Missing id or statement.
    Malformed,
    Duplicate,
    NonStdin,
    TooFewGolds,
    GoldFailed,
    /// No public tests to verify the golds with.
    Unverifiable,
    Hackable,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: DropReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    pub kept: usize,
    pub duplicate: usize,
    pub non_stdin: usize,
    pub too_few_golds: usize,
    pub gold_failed: usize,
    pub unverifiable: usize,
    pub hackable: usize,
    pub malformed: usize,
    pub rejections: Vec<Rejection>,
}

impl CurationReport {
    fn reject(&mut self, id: String, reason: DropReason, detail: impl Into<String>) {
        *self.slot(reason) += 1;
        self.rejections.push(Rejection { id, reason, detail: detail.into() });
    }

    fn slot(&mut self, reason: DropReason) -> &mut usize {
        match reason {
            DropReason::Malformed => &mut self.malformed,
            DropReason::Duplicate => &mut self.duplicate,
            DropReason::NonStdin => &mut self.non_stdin,
            DropReason::TooFewGolds => &mut self.too_few_golds,
            DropReason::GoldFailed => &mut self.gold_failed,
            DropReason::Unverifiable => &mut self.unverifiable,
            DropReason::Hackable => &mut self.hackable,
        }
    }

    pub fn count(&self, reason: DropReason) -> usize {
        let mut copy = self.clone();
        *copy.slot(reason)
    }

    pub fn rejected(&self) -> usize {
        self.duplicate
            + self.non_stdin
            + self.too_few_golds
            + self.gold_failed
            + self.unverifiable
            + self.hackable
            + self.malformed
    }

    pub fn total(&self) -> usize {
        self.kept + self.rejected()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub ngram: usize,
    pub threshold: f64,
    pub parallelism: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self { ngram: 8, threshold: 0.85, parallelism: 1 }
    }
}

fn markup() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>|\\[a-zA-Z]+").unwrap())
}

/// Lowercased tokens of `text` with HTML tags and LaTeX commands removed.
pub fn tokens(text: &str) -> Vec<String> {
    static WORD: OnceLock<Regex> = OnceLock::new();
    let word = WORD.get_or_init(|| Regex::new(r"[a-z0-9]+").unwrap());
    let lower = text.to_lowercase();
    let cleaned = markup().replace_all(&lower, " ");
    word.find_iter(&cleaned).map(|m| m.as_str().to_string()).collect()
}

/// Token n-grams; a text shorter than `n` tokens is one gram.
pub fn ngrams(text: &str, n: usize) -> HashSet<String> {
    let t = tokens(text);
    if t.is_empty() {
        return HashSet::new();
    }
    if t.len() < n {
        return HashSet::from([t.join("\u{1}")]);
    }
    t.windows(n).map(|w| w.join("\u{1}")).collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let shared = a.intersection(b).count();
    shared as f64 / (a.len() + b.len() - shared) as f64
}

pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    jaccard(&ngrams(a, n), &ngrams(b, n))
}

/// Indices of the problems a greedy first-wins scan keeps: a statement is
/// dropped when its similarity to any kept statement reaches `threshold`.
pub fn dedup_ngram(statements: &[&str], n: usize, threshold: f64) -> Vec<usize> {
    assert!(n >= 1 && threshold > 0.0 && threshold <= 1.0, "n >= 1 and threshold in (0, 1]");
    let mut kept: Vec<(usize, HashSet<String>)> = Vec::new();
    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, s) in statements.iter().enumerate() {
        let grams = ngrams(s, n);
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for g in &grams {
            for &k in index.get(g).map(Vec::as_slice).unwrap_or(&[]) {
                *shared.entry(k).or_default() += 1;
            }
        }
        let duplicate = if grams.is_empty() {
            kept.iter().any(|(_, g)| g.is_empty())
        } else {
            shared.iter().any(|(&k, &c)| {
                let other = &kept[k].1;
                c as f64 / (grams.len() + other.len() - c) as f64 >= threshold
            })
        };
        if !duplicate {
            for g in &grams {
                index.entry(g.clone()).or_default().push(kept.len());
            }
            kept.push((i, grams));
        }
    }
    kept.into_iter().map(|(i, _)| i).collect()
}

fn reads_stdin(source: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\binput\s*\(|raw_input|sys\.stdin|\bopen\s*\(\s*0|\bcin\b|scanf|getchar|\bgets\b|fgets|fread|\bstdin\b|read\s*\(\s*0|Scanner\s*\(\s*System\.in|System\.in",
        )
        .unwrap()
    })
    .is_match(source)
}

/// Keeps problems read from stdin that have at least two golds.
pub fn filter_eligible(problem: &RawProblem) -> Result<(), DropReason> {
    let stdin = match problem.io.as_deref() {
        Some(io) => io.eq_ignore_ascii_case("stdin"),
        None => problem.gold_solutions.is_empty() || problem.gold_solutions.iter().any(|g| reads_stdin(&g.source)),
    };
    if !stdin {
        return Err(DropReason::NonStdin);
    }
    if problem.gold_solutions.len() < 2 {
        return Err(DropReason::TooFewGolds);
    }
    Ok(())
}

/// Judges every gold on the public tests and keeps those passing all of
/// them; the problem survives with at least two.
pub fn verify_gold_solutions(
    engine: &Engine,
    problem: RawProblem,
    parallelism: usize,
) -> Result<Result<Problem, (DropReason, String)>, JudgeError> {
    if problem.public_tests.is_empty() {
        return Ok(Err((DropReason::Unverifiable, "no public tests".into())));
    }
    let golds = problem.gold_solutions.clone();
    let candidate = problem.into_problem(golds.clone());
    let suite = TestSuite::public(&candidate);
    let mut passing = Vec::new();
    let mut failures = Vec::new();
    for (i, g) in golds.into_iter().enumerate() {
        let r = judge_suite(engine, &g.source, &g.language, &suite, JudgeOptions { parallelism, early_stop: true })?;
        if r.all_accepted() {
            passing.push(g);
        } else {
            failures.push(format!("gold {i}: {}", r.aggregate));
        }
    }
    if passing.len() < 2 {
        return Ok(Err((DropReason::GoldFailed, failures.join("; "))));
    }
    Ok(Ok(Problem { gold_solutions: passing, ..candidate }))
}

/// Lowercase, HTML tags and LaTeX commands removed, `$` dropped, whitespace
/// collapsed.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let cleaned = markup().replace_all(&lower, " ").replace('$', " ");
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn contains_bounded(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let alnum = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    haystack.match_indices(needle).any(|(at, _)| {
        !alnum(haystack[..at].chars().next_back()) && !alnum(haystack[at + needle.len()..].chars().next())
    })
}

/// Drops a problem whose only public test already appears in its text, so a
/// hard-coded answer would pass.
pub fn anti_hack_filter(problem: &Problem) -> Result<(), DropReason> {
    if problem.public_tests.len() != 1 {
        return Ok(());
    }
    let text = normalize_text(&format!("{}\n{}\n{}", problem.statement, problem.input_format, problem.examples_text()));
    if contains_bounded(&text, &normalize_text(&problem.public_tests[0].input)) {
        return Err(DropReason::Hackable);
    }
    Ok(())
}

/// Runs the whole pipeline. Every input problem is either kept or counted
/// under exactly one reason.
pub fn curate(engine: &Engine, raws: Vec<RawProblem>, config: &CurationConfig) -> Result<(Vec<Problem>, CurationReport), JudgeError> {
    let mut report = CurationReport::default();

    let mut well_formed = Vec::new();
    for r in raws {
        let ok = r.id.as_deref().is_some_and(|s| !s.is_empty()) && r.statement.as_deref().is_some_and(|s| !s.trim().is_empty());
        if ok {
            well_formed.push(r);
        } else {
            report.reject(r.label(), DropReason::Malformed, "missing id or statement");
        }
    }

    let statements: Vec<&str> = well_formed.iter().map(|r| r.statement.as_deref().unwrap_or("")).collect();
    let keep: HashSet<usize> = dedup_ngram(&statements, config.ngram, config.threshold).into_iter().collect();
    let mut eligible = Vec::new();
    for (i, r) in well_formed.into_iter().enumerate() {
        if !keep.contains(&i) {
            report.reject(r.label(), DropReason::Duplicate, "");
            continue;
        }
        match filter_eligible(&r) {
            Ok(()) => eligible.push(r),
            Err(reason) => report.reject(r.label(), reason, ""),
        }
    }

    // per-problem gold verification runs in parallel; each problem judges sequentially
    let verified = for_each_parallel(eligible.len(), config.parallelism, false, |i| {
        (verify_gold_solutions(engine, eligible[i].clone(), 1), true)
    });
    let mut kept = Vec::new();
    for (raw, v) in eligible.iter().zip(verified) {
        match v? {
            Ok(p) => match anti_hack_filter(&p) {
                Ok(()) => kept.push(p),
                Err(reason) => report.reject(p.id.clone(), reason, "sole public test appears in the statement"),
            },
            Err((reason, detail)) => report.reject(raw.label(), reason, detail),
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(golds: &[&str], io: Option<&str>) -> RawProblem {
        RawProblem {
            id: Some("x".into()),
            statement: Some("s".into()),
            gold_solutions: golds.iter().map(|s| Solution::new("python3", *s)).collect(),
            io: io.map(str::to_string),
            ..RawProblem::default()
        }
    }

    #[test]
    fn dedup_examples() {
        let a = "the quick brown fox jumps over the lazy dog near the river bank today";
        assert_eq!(dedup_ngram(&[a, a], 8, 0.85), vec![0]);
        assert_eq!(dedup_ngram(&[a, "completely different words describing a graph problem with many edges and vertices"], 8, 0.85), vec![0, 1]);
        assert_eq!(dedup_ngram(&["short one", "Short   ONE"], 8, 0.85), vec![0]);
        assert_eq!(dedup_ngram(&["short one", "short two"], 8, 0.85), vec![0, 1]);
    }

    #[test]
    fn eligibility() {
        assert_eq!(filter_eligible(&raw(&["input()", "input()", "input()"], None)), Ok(()));
        assert_eq!(filter_eligible(&raw(&["input()"], None)), Err(DropReason::TooFewGolds));
        assert_eq!(filter_eligible(&raw(&["def f(x): return x", "def g(x): return x"], None)), Err(DropReason::NonStdin));
        assert_eq!(filter_eligible(&raw(&["input()", "input()"], Some("function"))), Err(DropReason::NonStdin));
        assert_eq!(filter_eligible(&raw(&["x", "y"], Some("stdin"))), Ok(()));
        assert_eq!(filter_eligible(&raw(&["scanf", "std::cin >> n"], None)), Ok(()));
    }

    fn problem(tests: &[&str], statement: &str, examples: &[&str]) -> Problem {
        RawProblem {
            id: Some("h".into()),
            statement: Some(statement.into()),
            examples: examples.iter().map(|e| Example { input: e.to_string(), output: "?".into() }).collect(),
            public_tests: tests.iter().map(|t| TestCase::public(*t, "?")).collect(),
            ..RawProblem::default()
        }
        .into_problem(vec![])
    }

    #[test]
    fn anti_hack_examples() {
        assert_eq!(anti_hack_filter(&problem(&["4 7\n"], "add", &["4 7"])), Err(DropReason::Hackable));
        assert_eq!(anti_hack_filter(&problem(&["4  7\n"], "For <b>example</b> $4$ 7 gives 11", &[])), Err(DropReason::Hackable));
        assert_eq!(anti_hack_filter(&problem(&["4 7\n", "1 1\n", "2 2\n"], "add", &["4 7"])), Ok(()));
        assert_eq!(anti_hack_filter(&problem(&["9 9\n"], "add", &["4 7"])), Ok(()));
        assert_eq!(anti_hack_filter(&problem(&["4 7\n"], "add 14 75", &[])), Ok(()));
    }

    #[test]
    fn report_counts() {
        let mut r = CurationReport::default();
        r.reject("a".into(), DropReason::Hackable, "");
        r.reject("b".into(), DropReason::Duplicate, "");
        r.kept = 3;
        assert_eq!(r.total(), 5);
        assert_eq!(r.count(DropReason::Hackable), 1);
        assert_eq!(DropReason::NonStdin.to_string(), "non_stdin");
    }

    proptest! {
        #[test]
        fn similarity_is_a_symmetric_fraction(a in "[a-c ]{0,40}", b in "[a-c ]{0,40}", n in 1usize..5) {
            let s = ngram_similarity(&a, &b, n);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, ngram_similarity(&b, &a, n));
            prop_assert_eq!(ngram_similarity(&a, &a, n), 1.0);
        }

        #[test]
        fn dedup_output_is_a_fixed_point(texts in prop::collection::vec("[ab ]{0,24}", 0..12), n in 1usize..4) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let kept = dedup_ngram(&refs, n, 0.85);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            let again: Vec<&str> = kept.iter().map(|&i| refs[i]).collect();
            prop_assert_eq!(dedup_ngram(&again, n, 0.85), (0..again.len()).collect::<Vec<_>>());
        }
    }
}
