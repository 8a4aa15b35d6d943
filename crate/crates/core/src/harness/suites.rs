//! Benchmark suites whose JSON output is written as `suite_report.json`.

use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::configs::{config_summary, run_config, ConfigName, HarnessError, PatternTask};
use super::eval::eval_clustering;
use super::gen::{gen_stream, GenConfig};
use super::oracle::oracle_match;
use super::patterns::{random_pattern, random_stream};
use crate::backend::{ModelBackend, SimulatedLlm};
use crate::nfa::{compile, MatcherConfig, MatcherState};
use crate::ops::{GroupBy, GroupStrategy, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Clustering,
    Configs,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Suite::Oracle),
            "clustering" => Ok(Suite::Clustering),
            "configs" => Ok(Suite::Configs),
            other => Err(format!("unknown suite {other} (expected oracle, clustering or configs)")),
        }
    }
}

/// Automaton against oracle on `cases` random (pattern, stream) pairs.
pub fn suite_oracle(cases: usize, seed: u64) -> Value {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreed = 0;
    let mut mismatches = Vec::new();
    let mut with_negation = 0;
    for case in 0..cases {
        let p = random_pattern(&mut rng, 4);
        let s = random_stream(&mut rng, 8);
        if p.to_string().contains("NOT(") {
            with_negation += 1;
        }
        let expected = oracle_match(&p, &s).expect("generated cases are within oracle limits");
        let nfa = compile(&p).expect("generated patterns are valid");
        let mut m = MatcherState::new(Arc::new(nfa), "p", MatcherConfig::default());
        let mut got = BTreeSet::new();
        for e in &s {
            got.extend(m.advance(e).expect("sorted stream").iter().map(|x| x.event_ids()));
        }
        got.extend(m.flush().iter().map(|x| x.event_ids()));
        if got == expected {
            agreed += 1;
        } else if mismatches.len() < 5 {
            mismatches.push(json!({
                "case": case,
                "pattern": p.to_string(),
                "stream": s.iter().map(|e| &e.event_id).collect::<Vec<_>>(),
                "automaton": got,
                "oracle": expected,
            }));
        }
    }
    json!({
        "suite": "oracle",
        "seed": seed,
        "cases": cases,
        "cases_with_negation": with_negation,
        "agreed": agreed,
        "mismatches": mismatches,
        "elapsed_ms": started.elapsed().as_secs_f64() * 1000.0,
    })
}

/// The three group-by strategies over a labelled stream, scored against the
/// topic labels.
pub fn suite_clustering(seed: u64, docs: usize) -> Result<Value, HarnessError> {
    let entities = docs.div_ceil(10).max(1);
    let stream = gen_stream(
        seed,
        &GenConfig {
            entities,
            docs_per_entity: 10,
            planted_patterns: 0,
            vocab: Vec::new(),
            doc_chars: 240,
        },
    )
    .expect("valid generator config");
    let documents = &stream.documents[..docs.min(stream.documents.len())];
    let truth_all = stream.ground_truth.topic_partition();
    let kept: BTreeSet<&str> = documents.iter().map(|d| d.doc_id.as_str()).collect();
    let truth: Vec<Vec<String>> = truth_all
        .into_iter()
        .map(|c| c.into_iter().filter(|d| kept.contains(d.as_str())).collect::<Vec<_>>())
        .filter(|c| !c.is_empty())
        .collect();
    let backend = SimulatedLlm::new();
    let mut rows = Vec::new();
    for strategy in [GroupStrategy::M1, GroupStrategy::M2, GroupStrategy::M3] {
        let mut g = GroupBy::new(strategy, DEFAULT_THRESHOLD, 10);
        let started = Instant::now();
        for d in documents {
            g.assign(d, &backend as &dyn ModelBackend)?;
        }
        let secs = started.elapsed().as_secs_f64();
        let pred = g.state.partition();
        let s = eval_clustering(&pred, &truth).expect("same universe");
        rows.push(json!({
            "strategy": format!("{strategy:?}"),
            "groups": pred.len(),
            "pairwise_f1": s.pairwise_f1,
            "ari": s.ari,
            "purity": s.purity,
            "throughput_tuples_per_s": if secs > 0.0 { Some(documents.len() as f64 / secs) } else { None },
            "refinements": g.refinements.len(),
        }));
    }
    Ok(json!({
        "suite": "clustering",
        "seed": seed,
        "docs": documents.len(),
        "topics": truth.len(),
        "results": rows,
        "notes": [
            "pairwise_f1 is F1 over co-clustered item pairs",
            "with no predicted pairs and no true pairs all pairwise scores are 1; with no predicted pairs otherwise, 0",
        ],
    }))
}

/// The four end-to-end configurations on a planted stream.
pub fn suite_configs(seed: u64, config: &GenConfig) -> Result<Value, HarnessError> {
    let stream = gen_stream(seed, config)?;
    let task = PatternTask::planted();
    let backend: Arc<dyn ModelBackend> = Arc::new(SimulatedLlm::new());
    let mut rows = Vec::new();
    let mut tokens = std::collections::BTreeMap::new();
    for c in ConfigName::ALL {
        let run = run_config(c, &stream.documents, &task, backend.clone())?;
        tokens.insert(c, run.usage.model_tokens());
        rows.push(config_summary(&run, &stream.ground_truth.matches));
    }
    let t = |c| tokens[&c];
    Ok(json!({
        "suite": "configs",
        "seed": seed,
        "generator": config,
        "documents": stream.documents.len(),
        "planted_matches": stream.ground_truth.matches.len(),
        "results": rows,
        "orderings": {
            "baseline_full_context > baseline_rag": t(ConfigName::BaselineFullContext) > t(ConfigName::BaselineRag),
            "sem_pattern > sem_pattern_rag": t(ConfigName::SemPattern) > t(ConfigName::SemPatternRag),
            "sem_pattern < baseline_full_context": t(ConfigName::SemPattern) < t(ConfigName::BaselineFullContext),
            "sem_pattern_rag < baseline_full_context": t(ConfigName::SemPatternRag) < t(ConfigName::BaselineFullContext),
        },
        "notes": [
            "model_tokens counts prompt and completion whitespace tokens of completion calls; embedding tokens are listed separately",
            "empty predicted and empty true match sets score f1 = 1",
        ],
    }))
}
