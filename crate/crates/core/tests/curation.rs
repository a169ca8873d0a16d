mod common;

use std::collections::BTreeMap;

use judgekit::curation::{curate, ngram_similarity, CurationConfig, RawProblem};
use judgekit::store::read_records;

fn fixture_problems() -> (Vec<RawProblem>, BTreeMap<String, String>) {
    let path = common::fixture("curation20.jsonl");
    let raws: Vec<RawProblem> = read_records(&path).unwrap();
    let values: Vec<serde_json::Value> = read_records(&path).unwrap();
    let planted = values
        .iter()
        .map(|v| (v["id"].as_str().unwrap().to_string(), v["planted"].as_str().unwrap().to_string()))
        .collect();
    (raws, planted)
}

#[test]
fn similarity_matches_reference_values() {
    let text = std::fs::read_to_string(common::fixture("near_duplicates.json")).unwrap();
    let d: BTreeMap<String, String> = serde_json::from_str(&text).unwrap();
    let (orig, renum, other) = (&d["original"], &d["renumbered"], &d["unrelated"]);
    assert_eq!(ngram_similarity(orig, renum, 8), 135.0 / 151.0);
    assert_eq!(ngram_similarity(orig, renum, 8), 0.8940397350993378);
    assert_eq!(ngram_similarity(orig, other, 8), 0.0);
    assert_eq!(ngram_similarity(orig, renum, 3), 137.0 / 143.0);
    assert_eq!(ngram_similarity(orig, other, 3), 0.01675977653631285);
}

#[test]
fn fixture_corpus_is_curated_as_planted() {
    if !common::isolation_available() {
        return;
    }
    let (raws, planted) = fixture_problems();
    let n = raws.len();
    let config = CurationConfig { parallelism: 2, ..CurationConfig::default() };
    let (kept, report) = curate(common::engine(), raws, &config).unwrap();

    let expected: BTreeMap<String, usize> =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("curation20_expected.json")).unwrap()).unwrap();
    let actual = serde_json::to_value(&report).unwrap();
    for (reason, count) in &expected {
        assert_eq!(actual[reason].as_u64().unwrap() as usize, *count, "{reason}");
    }
    assert_eq!(report.malformed, 0);
    assert_eq!(report.total(), n);

    for r in &report.rejections {
        assert_eq!(planted[&r.id], r.reason.to_string(), "{}", r.id);
    }
    for p in &kept {
        assert!(planted[&p.id].starts_with("kept"), "{}", p.id);
        assert!(p.gold_solutions.len() >= 2);
    }
    let fact = kept.iter().find(|p| p.id == "fact").unwrap();
    assert_eq!(fact.gold_solutions.len(), 2);

    // curating the output again changes nothing
    let again: Vec<RawProblem> = kept.iter().cloned().map(RawProblem::from).collect();
    let (kept2, report2) = curate(common::engine(), again, &config).unwrap();
    assert_eq!(kept2, kept);
    assert_eq!(report2.kept, kept.len());
    assert!(report2.rejections.is_empty());
}

#[test]
fn missing_fields_are_counted_as_malformed() {
    let raws: Vec<RawProblem> = serde_json::from_str(r#"[{"statement": "no id"}, {"id": "x"}, {"id": "y", "statement": "  "}]"#).unwrap();
    let (kept, report) = curate(common::engine(), raws, &CurationConfig::default()).unwrap();
    assert!(kept.is_empty());
    assert_eq!(report.malformed, 3);
    assert_eq!(report.total(), 3);
}
