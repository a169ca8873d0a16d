mod common;

use std::collections::BTreeSet;

use common::*;
use judgekit::llm::{LlmClient, MockLlm, ScriptEntry};
use judgekit::testgen::*;
use judgekit::{CaseKind, TestgenError};

fn generator(src: &str) -> GeneratorProgram {
    GeneratorProgram { kind: CaseKind::Regular, source: src.into(), round: 1, feedback_history: vec![] }
}

fn entry(matches: &[&str], response: String) -> ScriptEntry {
    ScriptEntry { matches: matches.iter().map(|s| s.to_string()).collect(), response }
}

fn inputs(lines: &[&str]) -> Vec<TestInput> {
    lines.iter().map(|l| TestInput { input: format!("{l}\n"), kind: CaseKind::Regular }).collect()
}

#[test]
fn generator_outcomes() {
    if !isolation_available() {
        return;
    }
    let cfg = SynthesisConfig::default();
    let e = engine();
    let ok = run_generator(e, &generator("print('[\"1\\\\n\", \"2 3\\\\n\"]')\n"), &cfg).unwrap();
    assert_eq!(ok, GeneratorOutcome::Inputs(inputs(&["1", "2 3"])));

    let bad = run_generator(e, &generator("print('not a list')\n"), &cfg).unwrap();
    assert!(matches!(bad, GeneratorOutcome::Failed(ref f) if f.category == FeedbackCategory::FormatError), "{bad:?}");

    let crash = run_generator(e, &generator("x = 1 / 0\n"), &cfg).unwrap();
    match crash {
        GeneratorOutcome::Failed(f) => {
            assert_eq!(f.category, FeedbackCategory::GeneratorExecutionError);
            assert!(f.detail.contains("ZeroDivisionError"), "{}", f.detail);
        }
        other => panic!("{other:?}"),
    }

    // generators run without the problem's cpu and memory caps
    let heavy = "import json\nx = bytearray(400 << 20)\nprint(json.dumps(['1']))\n";
    assert!(matches!(run_generator(e, &generator(heavy), &cfg).unwrap(), GeneratorOutcome::Inputs(_)));
}

#[test]
fn validation_accepts_agreement_and_rejects_divergence() {
    if !isolation_available() {
        return;
    }
    let p = argmax_problem();
    let e = engine();
    let golds = GoldPair::new(e, &p, (0, 1)).unwrap();
    let v = consistency_validate(e, &inputs(&["1 9 3", "4 4 1", "0 0 0"]), &p, &golds, 2).unwrap();
    assert_eq!(v.valid.len(), 1);
    assert_eq!(v.valid[0].expected_output, "2\n");
    assert_eq!(v.rejected.len(), 2);
    assert!(v.rejected.iter().all(|(_, f)| f.category == FeedbackCategory::InconsistentOutput));
}

#[test]
fn gold_limits_become_feedback() {
    if !isolation_available() {
        return;
    }
    let mut p = sum_problem();
    p.time_limit_ms = 500;
    p.gold_solutions[1].source =
        "#include <cstdio>\nint main(){long long a,b;scanf(\"%lld %lld\",&a,&b);if(a>1000){volatile long x=0;for(;;)x++;}printf(\"%lld\\n\",a+b);}\n".into();
    let e = engine();
    let golds = GoldPair::new(e, &p, (0, 1)).unwrap();
    let v = consistency_validate(e, &inputs(&["5 5", "5000 1"]), &p, &golds, 1).unwrap();
    assert_eq!(v.valid.len(), 1);
    assert_eq!(v.rejected[0].1.category, FeedbackCategory::TimeLimit);
}

#[test]
fn divergence_set_matches_enumeration_on_small_domain() {
    if !isolation_available() {
        return;
    }
    let oracle: BTreeSet<String> = std::fs::read_to_string(fixture("argmax_divergent.txt"))
        .unwrap()
        .lines()
        .filter(|l| l.split(' ').all(|x| x.parse::<u32>().unwrap() < 4))
        .map(str::to_string)
        .collect();
    let mut all = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                all.push(format!("{a} {b} {c}"));
            }
        }
    }
    let refs: Vec<&str> = all.iter().map(String::as_str).collect();
    let p = argmax_problem();
    let e = engine();
    let golds = GoldPair::new(e, &p, (0, 1)).unwrap();
    let v = consistency_validate(e, &inputs(&refs), &p, &golds, 4).unwrap();
    let rejected: BTreeSet<String> = v.rejected.iter().map(|(t, _)| t.input.trim_end().to_string()).collect();
    assert_eq!(rejected, oracle);
    assert_eq!(v.valid.len() + v.rejected.len(), 64);
}

#[test]
fn first_round_success_respects_quotas() {
    if !isolation_available() {
        return;
    }
    let regular: Vec<String> = (0..100).map(|i| format!("{i} {}", i * 7)).collect();
    let regular: Vec<&str> = regular.iter().map(String::as_str).collect();
    let llm = MockLlm::new(vec![
        entry(&["80 unit test inputs"], generator_reply(&regular)),
        entry(&["20 strictly boundary unit test inputs"], generator_reply(&["0 -1", "-1000000000 -1000000000", "1000000000 1000000000"])),
    ]);
    let r = synthesize_suite(engine(), &sum_problem(), &llm, &SynthesisConfig::default()).unwrap();
    assert_eq!(r.suite.count(CaseKind::Regular), 80);
    assert_eq!(r.suite.count(CaseKind::Corner), 3);
    assert_eq!(r.rounds_used, RoundsUsed { regular: 1, corner: 1 });
    assert!(r.log.is_empty());
    assert!(r.suite.cases.iter().all(|c| c.round == 1));
    assert_eq!(r.suite.cases[1].expected_output, "8\n");

    // re-validating the emitted suite rejects nothing
    let e = engine();
    let golds = GoldPair::new(e, &sum_problem(), r.gold_pair).unwrap();
    let again: Vec<TestInput> = r.suite.cases.iter().map(|c| TestInput { input: c.input.clone(), kind: c.kind }).collect();
    let v = consistency_validate(e, &again, &sum_problem(), &golds, 4).unwrap();
    assert!(v.rejected.is_empty());
    assert_eq!(v.valid, r.suite.cases.iter().map(|c| { let mut c = c.clone(); c.round = 0; c }).collect::<Vec<_>>());
}

#[test]
fn format_error_is_repaired_in_round_two() {
    if !isolation_available() {
        return;
    }
    let llm = MockLlm::new(vec![
        entry(&["80 unit test inputs"], "```python\nprint('three cases: 1 2, 3 4, 5 6')\n```".into()),
        entry(&["Reported error (Formatting error)"], generator_reply(&["1 2", "3 4", "5 6"])),
        entry(&["20 strictly boundary unit test inputs"], generator_reply(&["0 0"])),
    ]);
    let r = synthesize_suite(engine(), &sum_problem(), &llm, &SynthesisConfig::default()).unwrap();
    assert_eq!(r.rounds_used, RoundsUsed { regular: 2, corner: 1 });
    assert_eq!(r.suite.count(CaseKind::Regular), 3);
    assert_eq!(r.log.len(), 1);
    assert_eq!(r.log[0].category, FeedbackCategory::FormatError);
    let prompts = llm.prompts();
    assert!(prompts[1].contains("print('three cases"), "repair prompt embeds the failing generator");
}

#[test]
fn failing_every_round_reports_history() {
    if !isolation_available() {
        return;
    }
    let broken = || "```python\nraise SystemExit('nope')\n```".to_string();
    let llm = MockLlm::new((0..6).map(|_| entry(&[], broken())).collect());
    let err = synthesize_suite(engine(), &sum_problem(), &llm, &SynthesisConfig::default()).unwrap_err();
    match err {
        TestgenError::SynthesisFailed { history, .. } => {
            assert_eq!(history.len(), 6);
            for kind in [CaseKind::Regular, CaseKind::Corner] {
                let rounds: Vec<u32> = history.iter().filter(|h| h.kind == kind).map(|h| h.round).collect();
                assert_eq!(rounds, vec![1, 2, 3]);
            }
            assert!(history.iter().all(|h| h.category == FeedbackCategory::GeneratorExecutionError));
        }
        other => panic!("{other}"),
    }
    assert_eq!(llm.prompts().len(), 6);
    assert_eq!(llm.remaining(), 0);
}

#[test]
fn regular_only_suite_sets_corner_flag() {
    if !isolation_available() {
        return;
    }
    let mut script = vec![entry(&["80 unit test inputs"], generator_reply(&["1 1", "2 2"]))];
    script.extend((0..3).map(|_| entry(&[], "```python\nprint('oops')\n```".into())));
    let llm = MockLlm::new(script);
    let r = synthesize_suite(engine(), &sum_problem(), &llm, &SynthesisConfig::default()).unwrap();
    assert!(r.suite.corner_failed && !r.suite.regular_failed);
    assert_eq!(r.rounds_used.corner, 3);
    assert_eq!(r.suite.count(CaseKind::Regular), 2);
}

#[test]
fn inconsistent_inputs_drive_repair_and_never_exceed_three_requests() {
    if !isolation_available() {
        return;
    }
    let llm = MockLlm::new(vec![
        entry(&["80 unit test inputs"], generator_reply(&["1 2 3", "5 5 1"])),
        entry(&["Inconsistent output", "5 5 1"], generator_reply(&["7 7 7", "2 1 0"])),
        entry(&["Inconsistent output", "7 7 7"], generator_reply(&["9 9 1"])),
        entry(&["20 strictly boundary unit test inputs"], generator_reply(&["0 0 0"])),
        entry(&["Inconsistent output", "0 0 0"], generator_reply(&["0 0 1"])),
    ]);
    let r = synthesize_suite(engine(), &argmax_problem(), &llm, &SynthesisConfig::default()).unwrap();
    assert_eq!(r.rounds_used, RoundsUsed { regular: 3, corner: 2 });
    let got: Vec<&str> = r.suite.cases.iter().map(|c| c.input.as_str()).collect();
    assert_eq!(got, vec!["1 2 3\n", "2 1 0\n", "0 0 1\n"]);
    assert!(!r.suite.regular_failed && !r.suite.corner_failed);
    assert_eq!(llm.remaining(), 0);
}

#[test]
fn synthesis_is_deterministic_with_a_scripted_llm() {
    if !isolation_available() {
        return;
    }
    let script = || {
        MockLlm::new(vec![
            entry(&["80 unit test inputs"], generator_reply(&["3 1 2", "1 1 2", "4 4 4", "0 9 8"])),
            entry(&["Inconsistent output"], generator_reply(&["6 2 1", "3 1 2"])),
            entry(&["20 strictly boundary unit test inputs"], generator_reply(&["0 0 1", "15 14 13"])),
        ])
    };
    let cfg = SynthesisConfig { parallelism: 3, ..SynthesisConfig::default() };
    let a = synthesize_suite(engine(), &argmax_problem(), &script(), &cfg).unwrap();
    let b = synthesize_suite(engine(), &argmax_problem(), &script(), &cfg).unwrap();
    assert_eq!(a.suite, b.suite);
    assert_eq!(a.log, b.log);
    // the duplicate "3 1 2" from round two is dropped before validation
    assert_eq!(a.suite.cases.iter().filter(|c| c.input == "3 1 2\n").count(), 1);
}

#[test]
fn too_few_golds_is_an_error() {
    let mut p = sum_problem();
    p.gold_solutions.truncate(1);
    let llm = MockLlm::new(vec![]);
    assert!(matches!(
        synthesize_suite(engine(), &p, &llm as &dyn LlmClient, &SynthesisConfig::default()),
        Err(TestgenError::TooFewGolds(_))
    ));
}
