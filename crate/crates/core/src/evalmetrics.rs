//! Suite quality as true-positive and true-negative rates over solutions
//! labeled by a larger evaluation set.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{EvalError, JudgeError};
use crate::judge::{for_each_parallel, judge_artifact, judge_suite, JudgeOptions, JudgeReport, Verdict};
use crate::model::{Solution, TestSuite};
use crate::toolchain::{compile, CompileResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSolution {
    pub solution: Solution,
    pub label: Label,
    /// The report under the full evaluation set.
    pub evidence: JudgeReport,
}

/// Judges every candidate on `full_set`; those passing all of it are
/// correct. Candidates that do not compile are left out.
pub fn label_solutions(
    engine: &Engine,
    candidates: &[Solution],
    full_set: &TestSuite,
    parallelism: usize,
) -> Result<Vec<LabeledSolution>, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::NoCandidates);
    }
    let reports = for_each_parallel(candidates.len(), parallelism, false, |i| {
        let c = &candidates[i];
        (judge_suite(engine, &c.source, &c.language, full_set, JudgeOptions::default()), true)
    });
    let mut labeled = Vec::new();
    for (c, r) in candidates.iter().zip(reports) {
        let r = r?;
        if r.aggregate == Verdict::CompileError {
            log::info!("excluding a {} candidate that does not compile", c.language);
            continue;
        }
        let label = if r.all_accepted() { Label::Correct } else { Label::Incorrect };
        labeled.push(LabeledSolution { solution: c.clone(), label, evidence: r });
    }
    Ok(labeled)
}

/// Rates for one group of solutions; a rate with an empty denominator is
/// absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub correct_accepted: usize,
    pub incorrect_rejected: usize,
}

impl Rates {
    fn add(&mut self, label: Label, accepted: bool) {
        match label {
            Label::Correct => {
                self.n_correct += 1;
                self.correct_accepted += usize::from(accepted);
            }
            Label::Incorrect => {
                self.n_incorrect += 1;
                self.incorrect_rejected += usize::from(!accepted);
            }
        }
        self.tpr = ratio(self.correct_accepted, self.n_correct);
        self.tnr = ratio(self.incorrect_rejected, self.n_incorrect);
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Pooled over all solutions.
    #[serde(flatten)]
    pub micro: Rates,
    /// Keyed by reporting group (`C/C++`, `Python3`...).
    pub per_language: BTreeMap<String, Rates>,
    /// Unweighted mean over groups where the rate is defined.
    pub macro_tpr: Option<f64>,
    pub macro_tnr: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Builds the report from `(group, label, accepted)` triples.
pub fn quality_from_outcomes<'a>(outcomes: impl IntoIterator<Item = (&'a str, Label, bool)>) -> QualityReport {
    let mut r = QualityReport::default();
    for (group, label, accepted) in outcomes {
        r.micro.add(label, accepted);
        r.per_language.entry(group.to_string()).or_default().add(label, accepted);
    }
    r.macro_tpr = mean(r.per_language.values().map(|g| g.tpr));
    r.macro_tnr = mean(r.per_language.values().map(|g| g.tnr));
    r
}

fn group_of(engine: &Engine, language: &str) -> String {
    engine.resolve(language).map(|p| p.group.clone()).unwrap_or_else(|_| language.to_string())
}

/// Judges every labeled solution on `suite`; a solution is accepted when it
/// passes every case.
pub fn compute_quality(
    engine: &Engine,
    labels: &[LabeledSolution],
    suite: &TestSuite,
    parallelism: usize,
) -> Result<QualityReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let accepted = for_each_parallel(labels.len(), parallelism, false, |i| {
        let s = &labels[i].solution;
        let opts = JudgeOptions { parallelism: 1, early_stop: true };
        (judge_suite(engine, &s.source, &s.language, suite, opts).map(|r| r.all_accepted()), true)
    });
    let accepted = accepted.into_iter().collect::<Result<Vec<bool>, JudgeError>>()?;
    let groups: Vec<String> = labels.iter().map(|l| group_of(engine, &l.solution.language)).collect();
    Ok(quality_from_outcomes(labels.iter().zip(&accepted).zip(&groups).map(|((l, a), g)| (g.as_str(), l.label, *a))))
}

/// Per-case acceptance of every labeled solution on a pool of cases, so many
/// sub-suites of the pool can be scored from one round of judging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub groups: Vec<String>,
    pub labels: Vec<Label>,
    /// `passed[s][c]`: solution `s` was accepted on pool case `c`.
    pub passed: Vec<Vec<bool>>,
}

impl OutcomeMatrix {
    pub fn build(engine: &Engine, labels: &[LabeledSolution], pool: &TestSuite, parallelism: usize) -> Result<Self, EvalError> {
        if labels.is_empty() {
            return Err(EvalError::NoLabels);
        }
        let rows = for_each_parallel(labels.len(), parallelism, false, |i| {
            let s = &labels[i].solution;
            let row = (|| -> Result<Vec<bool>, EvalError> {
                let profile = engine.resolve(&s.language)?;
                match compile(engine, &s.source, &profile)? {
                    CompileResult::Ok(a) => {
                        let r = judge_artifact(engine, &a, pool, JudgeOptions::default())?;
                        Ok(r.per_case.iter().map(|c| c.verdict == Verdict::Accepted).collect())
                    }
                    CompileResult::Failure(_) => Ok(vec![false; pool.cases.len()]),
                }
            })();
            (row, true)
        });
        Ok(Self {
            groups: labels.iter().map(|l| group_of(engine, &l.solution.language)).collect(),
            labels: labels.iter().map(|l| l.label).collect(),
            passed: rows.into_iter().collect::<Result<_, _>>()?,
        })
    }

    /// Quality of the sub-suite made of the given pool cases.
    pub fn quality(&self, cases: &[usize]) -> QualityReport {
        quality_from_outcomes(
            self.passed
                .iter()
                .zip(&self.labels)
                .zip(&self.groups)
                .map(|((row, l), g)| (g.as_str(), *l, cases.iter().all(|&c| row[c]))),
        )
    }
}

fn pct(r: Option<f64>) -> String {
    r.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into())
}

/// Aligned text table: one row per group, then the pooled and averaged rows.
pub fn render_table(report: &QualityReport) -> String {
    let mut rows = vec![["group".to_string(), "correct".into(), "incorrect".into(), "TPR%".into(), "TNR%".into()]];
    for (g, r) in &report.per_language {
        rows.push([g.clone(), r.n_correct.to_string(), r.n_incorrect.to_string(), pct(r.tpr), pct(r.tnr)]);
    }
    let m = &report.micro;
    rows.push(["micro".into(), m.n_correct.to_string(), m.n_incorrect.to_string(), pct(m.tpr), pct(m.tnr)]);
    rows.push(["macro".into(), String::new(), String::new(), pct(report.macro_tpr), pct(report.macro_tnr)]);
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let _ = write!(out, "{:<w$}", r[0], w = widths[0]);
        for c in 1..5 {
            let _ = write!(out, "  {:>w$}", r[c], w = widths[c]);
        }
        out.push('\n');
    }
    out
}
