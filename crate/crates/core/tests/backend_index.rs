use std::sync::Arc;

use proptest::prelude::*;
use semflow_core::backend::{
    cosine, CallKind, EchoBackend, Meter, ModelBackend, ReplayBackend, RuleBackend, SimulatedLlm, Transcript,
    MOCK_EMBED_DIM,
};
use semflow_core::index::{Chunking, IndexError, RetrievalIndex};
use semflow_core::Document;

/// FNV-1a, written out here so bucket collisions can be predicted without
/// going through the backend.
fn bucket(token: &str) -> usize {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in token.to_lowercase().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % MOCK_EMBED_DIM as u64) as usize
}

#[test]
fn echo_and_rule_backends() {
    let c = EchoBackend.complete("hello there").unwrap();
    assert_eq!(c.text, "hello there");
    let r = RuleBackend::new("NO").rule("sepsis", "YES");
    assert_eq!(r.complete("sepsis noted").unwrap().text, "YES");
    assert_eq!(r.complete("all clear").unwrap().text, "NO");
}

#[test]
fn mock_token_rule_is_whitespace_count() {
    let r = RuleBackend::new("NO").rule("sepsis", "YES please");
    let c = r.complete("  sepsis   noted today ").unwrap();
    assert_eq!(c.usage.prompt_tokens, 3);
    assert_eq!(c.usage.completion_tokens, 2);
    let e = SimulatedLlm.embed("one two  three").unwrap();
    assert_eq!(e.usage.prompt_tokens, 3);
    assert_eq!(e.usage.completion_tokens, 0);
}

#[test]
fn embeddings_are_bitwise_deterministic_and_normalized() {
    let a = SimulatedLlm.embed("renal failure on dialysis").unwrap();
    let b = SimulatedLlm.embed("renal failure on dialysis").unwrap();
    assert_eq!(a.vector.len(), MOCK_EMBED_DIM);
    assert!(a.vector.iter().zip(&b.vector).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!((cosine(&a.vector, &a.vector) - 1.0).abs() < 1e-12);
    let z = SimulatedLlm.embed("  ").unwrap();
    assert!(z.empty);
    assert!(z.vector.iter().all(|x| *x == 0.0));
}

#[test]
fn disjoint_texts_are_orthogonal_unless_buckets_collide() {
    let pairs = [
        ("alpha", "omega"),
        ("chest pain", "renal stone"),
        ("fever", "fracture"),
        ("sepsis antibiotics", "knee brace"),
        ("x", "y"),
        ("cardiac", "ortho"),
    ];
    for (a, b) in pairs {
        let ea = SimulatedLlm.embed(a).unwrap();
        let eb = SimulatedLlm.embed(b).unwrap();
        let collide = a
            .split_whitespace()
            .any(|x| b.split_whitespace().any(|y| bucket(x) == bucket(y)));
        let c = cosine(&ea.vector, &eb.vector);
        if collide {
            assert!(c > 0.0, "{a} / {b}");
        } else {
            assert_eq!(c, 0.0, "{a} / {b}");
        }
    }
}

#[test]
fn transcript_replays_byte_identically() {
    let t = Transcript::new();
    let live = Meter::new(Arc::new(SimulatedLlm), t.clone(), "op");
    let prompts = ["### task: map\n## instruction\nupper\n## document\nabc", "### task: filter\n## criterion\n\"x\"\n## document\nx"];
    let mut first = Vec::new();
    for p in prompts {
        first.push(live.complete(p).unwrap().text);
    }
    live.embed("some text").unwrap();
    let jsonl = t.to_jsonl();
    let records = Transcript::from_jsonl(&jsonl).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[2].kind, CallKind::Embed);

    let t2 = Transcript::new();
    let replay = Meter::new(Arc::new(ReplayBackend::new(records)), t2.clone(), "op");
    let second: Vec<String> = prompts.iter().map(|p| replay.complete(p).unwrap().text).collect();
    replay.embed("some text").unwrap();
    assert_eq!(first, second);
    let strip = |s: &str| -> Vec<serde_json::Value> {
        s.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["usage"]["latency_ms"] = 0.into();
                v
            })
            .collect()
    };
    assert_eq!(strip(&t2.to_jsonl()), strip(&jsonl));
    assert!(replay.complete("never seen").is_err());
}

#[test]
fn chunking_arithmetic() {
    let mut idx = RetrievalIndex::new(Chunking { size: 400, overlap: 80 });
    let text: String = "abcdefghij".repeat(100);
    let n = idx.add(&Document::new("d", "e", 0, text), &SimulatedLlm).unwrap();
    assert_eq!(n, 4);
    let starts: Vec<usize> = idx.chunks().iter().map(|c| c.span.0).collect();
    assert_eq!(starts, [0, 320, 640, 960]);
    assert_eq!(idx.add(&Document::new("empty", "e", 0, ""), &SimulatedLlm).unwrap(), 0);
    assert!(matches!(
        idx.add(&Document::new("d", "e", 0, "again"), &SimulatedLlm),
        Err(IndexError::DuplicateDoc(_))
    ));
}

#[test]
fn self_query_ranks_first() {
    let mut idx = RetrievalIndex::new(Chunking::default());
    for (i, t) in ["renal dialysis access", "chest pain at rest", "knee fracture cast"].iter().enumerate() {
        idx.add(&Document::new(format!("d{i}"), "e", 0, *t), &SimulatedLlm).unwrap();
    }
    let hits = idx.top_k(&SimulatedLlm, "chest pain at rest", 10).unwrap();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0].0.doc_id, "d1");
    assert!((hits[0].1 - 1.0).abs() < 1e-12);
}

const WORDS: &[&str] = &[
    "renal", "cardiac", "pain", "fever", "knee", "lung", "sepsis", "rest", "night", "dose", "scan", "blood",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 0..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn top_k_equals_exhaustive_scan(
        docs in prop::collection::vec(text(), 1..40),
        query in text(),
        k in 1usize..70,
    ) {
        let mut idx = RetrievalIndex::new(Chunking { size: 30, overlap: 10 });
        for (i, t) in docs.iter().enumerate() {
            idx.add(&Document::new(format!("d{i:02}"), "e", 0, t.clone()), &SimulatedLlm).unwrap();
        }
        prop_assume!(idx.len() <= 64);
        let got: Vec<(String, f64)> = idx
            .top_k(&SimulatedLlm, &query, k)
            .unwrap()
            .into_iter()
            .map(|(c, s)| (c.chunk_id.clone(), s))
            .collect();

        let q = SimulatedLlm.embed(&query).unwrap().vector;
        let mut all: Vec<(String, f64)> = idx
            .chunks()
            .iter()
            .map(|c| {
                let e = SimulatedLlm.embed(&c.text).unwrap().vector;
                let dot: f64 = q.iter().zip(&e).map(|(a, b)| a * b).sum();
                let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let s = if n(&q) == 0.0 || n(&e) == 0.0 { 0.0 } else { dot / (n(&q) * n(&e)) };
                (c.chunk_id.clone(), s)
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(got.len(), all.len());
        for (g, w) in got.iter().zip(&all) {
            prop_assert_eq!(&g.0, &w.0);
            prop_assert!((g.1 - w.1).abs() < 1e-12);
        }
        prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
