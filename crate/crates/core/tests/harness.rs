use std::collections::BTreeSet;
use std::sync::Arc;

use semflow_core::backend::{ModelBackend, SimulatedLlm};
use semflow_core::harness::{
    eval_pattern, gen_stream, run_config, suite_configs, suite_oracle, ConfigName, GenConfig, GenError,
    PatternTask,
};

fn sim() -> Arc<dyn ModelBackend> {
    Arc::new(SimulatedLlm)
}

#[test]
fn generator_is_byte_deterministic() {
    let cfg = GenConfig::default();
    assert_eq!(gen_stream(9, &cfg).unwrap().to_jsonl(), gen_stream(9, &cfg).unwrap().to_jsonl());
    assert_ne!(gen_stream(9, &cfg).unwrap().to_jsonl(), gen_stream(10, &cfg).unwrap().to_jsonl());
}

#[test]
fn planted_entities_match_document_text() {
    let s = gen_stream(4, &GenConfig::default()).unwrap();
    let truth = &s.ground_truth;
    assert_eq!(s.documents.len(), 120);
    assert_eq!(truth.planted_entities.len(), 5);
    assert_eq!(truth.matches.len(), 5);
    let entities: BTreeSet<_> = truth.matches.iter().map(|m| m.entity_id.clone()).collect();
    assert_eq!(entities, truth.planted_entities.iter().cloned().collect());
    for m in &truth.matches {
        let docs: Vec<_> = s.documents.iter().filter(|d| d.entity_id == m.entity_id).collect();
        let lower = |t: &str| t.to_lowercase();
        let discharged: Vec<_> = docs.iter().filter(|d| lower(&d.text).contains("discharge")).collect();
        assert_eq!(discharged.len(), 1);
        assert_eq!(m.timestamps, vec![discharged[0].timestamp]);
        assert!(docs.iter().all(|d| !lower(&d.text).contains("follow")));
    }
    let ts: Vec<_> = s.documents.iter().map(|d| (d.timestamp, d.doc_id.clone())).collect();
    let mut sorted = ts.clone();
    sorted.sort();
    assert_eq!(ts, sorted);
}

#[test]
fn generator_edge_configs() {
    let empty = GenConfig {
        entities: 0,
        planted_patterns: 0,
        ..GenConfig::default()
    };
    let s = gen_stream(1, &empty).unwrap();
    assert!(s.documents.is_empty());
    assert_eq!(s.to_jsonl(), "");
    let over = GenConfig {
        entities: 2,
        planted_patterns: 3,
        ..GenConfig::default()
    };
    assert!(matches!(gen_stream(1, &over), Err(GenError::Config(_))));
    let bad_topic = GenConfig {
        vocab: vec!["astrology".into()],
        ..GenConfig::default()
    };
    assert!(gen_stream(1, &bad_topic).is_err());
}

#[test]
fn pipeline_configs_recover_planted_matches() {
    let s = gen_stream(7, &GenConfig::default()).unwrap();
    let task = PatternTask::planted();
    for c in [ConfigName::SemPattern, ConfigName::SemPatternRag, ConfigName::BaselineFullContext] {
        let run = run_config(c, &s.documents, &task, sim()).unwrap();
        let score = eval_pattern(&run.matches, &s.ground_truth.matches);
        assert_eq!(score.f1, 1.0, "{c}");
        assert_eq!(run.report.totals.total_tokens, run.usage.model_tokens(), "{c}");
    }
}

#[test]
fn token_orderings_hold() {
    let v = suite_configs(7, &GenConfig::default()).unwrap();
    for (k, ok) in v["orderings"].as_object().unwrap() {
        assert_eq!(ok, true, "{k}");
    }
}

#[test]
fn empty_stream_costs_nothing() {
    let task = PatternTask::planted();
    for c in ConfigName::ALL {
        let run = run_config(c, &[], &task, sim()).unwrap();
        assert!(run.matches.is_empty());
        assert_eq!(run.usage.calls + run.usage.embed_calls, 0, "{c}");
    }
}

#[test]
fn oracle_suite_reports_agreement() {
    let v = suite_oracle(100, 5);
    assert_eq!(v["cases"], 100);
    assert_eq!(v["agreed"], 100);
    assert!(v["mismatches"].as_array().unwrap().is_empty());
}
