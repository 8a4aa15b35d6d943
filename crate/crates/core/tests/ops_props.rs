use std::collections::BTreeSet;

use proptest::prelude::*;
use semflow_core::backend::{ScriptedBackend, SimulatedLlm};
use semflow_core::harness::{gen_stream, GenConfig};
use semflow_core::ops::{
    groupby_assign, groupby_refine, sem_filter, Decision, GroupBy, GroupState, GroupStrategy, SemWindow,
    WindowStrategy,
};
use semflow_core::Document;

fn stream(seed: u64, n: usize) -> Vec<Document> {
    let cfg = GenConfig {
        entities: n / 5,
        docs_per_entity: 5,
        planted_patterns: 0,
        vocab: Vec::new(),
        doc_chars: 240,
    };
    gen_stream(seed, &cfg).unwrap().documents
}

#[test]
fn m3_is_a_partition_after_every_tuple() {
    let docs = stream(11, 200);
    assert_eq!(docs.len(), 200);
    let mut g = GroupBy::new(GroupStrategy::M3, 0.6, 10);
    let mut processed = Vec::new();
    for d in &docs {
        let gid = g.assign(d, &SimulatedLlm).unwrap();
        processed.push(d.doc_id.clone());
        assert!(g.state.is_partition_of(&processed), "after {}", d.doc_id);
        assert_eq!(g.state.group_of(&d.doc_id).unwrap().group_id, gid);
    }
    assert_eq!(g.state.tuples_seen, 200);
    assert!(g.refinements.is_empty());
}

#[test]
fn m2_refines_on_cadence_and_keeps_members() {
    let docs = stream(12, 200);
    let mut g = GroupBy::new(GroupStrategy::M2, 0.6, 10);
    let mut processed = Vec::new();
    for d in &docs {
        g.assign(d, &SimulatedLlm).unwrap();
        processed.push(d.doc_id.clone());
        assert!(g.state.is_partition_of(&processed));
    }
    let expected: Vec<u64> = (1..=20).map(|i| i * 10).collect();
    assert_eq!(g.refinements, expected);
    let all: BTreeSet<String> = processed.into_iter().collect();
    assert_eq!(g.state.members(), all);
}

#[test]
fn m3_is_deterministic() {
    let docs = stream(13, 100);
    let run = || {
        let mut g = GroupBy::new(GroupStrategy::M3, 0.6, 10);
        for d in &docs {
            g.assign(d, &SimulatedLlm).unwrap();
        }
        serde_json::to_string(&g.state).unwrap()
    };
    assert_eq!(run(), run());
}

fn seeded_state(n: usize, groups: usize) -> GroupState {
    let mut s = GroupState::default();
    let mut script = Vec::new();
    for i in 0..n {
        let g = i % groups;
        if i < groups {
            script.push(format!("NEW t{g}"));
        } else {
            script.push(format!("ASSIGN g{}", g + 1));
        }
    }
    let b = ScriptedBackend::new(script);
    for i in 0..n {
        let d = Document::new(format!("d{i}"), "e", i as i64, format!("text {i}"));
        groupby_assign(&d, &mut s, GroupStrategy::M1, &b, 0.6, "").unwrap();
    }
    s
}

proptest! {
    #[test]
    fn refinement_conserves_members(
        n in 4usize..30,
        groups in 2usize..5,
        merge in proptest::collection::btree_set(1usize..5, 0..4),
        split_group in 1usize..5,
        split_take in 1usize..4,
    ) {
        let s0 = seeded_state(n, groups);
        let before = s0.members();
        let mut lines = Vec::new();
        let merge: Vec<usize> = merge.into_iter().filter(|g| *g <= groups).collect();
        if merge.len() >= 2 {
            lines.push(format!("merge {}", merge.iter().map(|g| format!("g{g}")).collect::<Vec<_>>().join(",")));
        }
        if split_group <= groups && !merge.contains(&split_group) {
            let members = &s0.groups[split_group - 1].members;
            if members.len() > split_take {
                lines.push(format!("split g{split_group}: {}", members[..split_take].join(",")));
            }
        }
        let mut s = s0.clone();
        groupby_refine(&mut s, &ScriptedBackend::new([lines.join("\n")]), &|id| Some(id.to_string())).unwrap();
        let processed: Vec<String> = before.iter().cloned().collect();
        prop_assert!(s.is_partition_of(&processed));
        prop_assert_eq!(s.members(), before);
        let mut expected = groups;
        if merge.len() >= 2 { expected -= merge.len() - 1; }
        if lines.iter().any(|l| l.starts_with("split")) { expected += 1; }
        prop_assert_eq!(s.groups.len(), expected);
    }

    #[test]
    fn rejected_plans_leave_state_untouched(n in 4usize..20, bogus in "[a-z]{1,6}") {
        let s0 = seeded_state(n, 2);
        for reply in [format!("merge g1,{bogus}9"), format!("split g1: {bogus}"), format!("{bogus} g1")] {
            let mut s = s0.clone();
            prop_assert!(groupby_refine(&mut s, &ScriptedBackend::new([reply]), &|_| None).is_err());
            prop_assert_eq!(&s, &s0);
        }
    }

    #[test]
    fn windows_cover_each_entity_in_order(
        seed in 0u64..500,
        strategy in prop_oneof![
            Just(WindowStrategy::Pairwise),
            Just(WindowStrategy::RollingSummary),
            Just(WindowStrategy::EmbedCluster),
        ],
        threshold in 0.0f64..1.0,
    ) {
        let docs = stream(seed, 20);
        let mut w = SemWindow::new(strategy, threshold);
        let mut seen = Vec::new();
        for d in &docs {
            if let Some(closed) = w.push(d, &SimulatedLlm).unwrap() {
                prop_assert!(!closed.is_empty());
                prop_assert!(closed.iter().all(|c| c.entity_id == d.entity_id));
                seen.extend(closed);
            }
        }
        for win in w.close_all() {
            prop_assert!(!win.is_empty());
            seen.extend(win);
        }
        prop_assert_eq!(seen.len(), docs.len());
        let ids: BTreeSet<_> = seen.iter().map(|d| d.doc_id.clone()).collect();
        prop_assert_eq!(ids.len(), docs.len());
        for e in docs.iter().map(|d| &d.entity_id).collect::<BTreeSet<_>>() {
            let got: Vec<_> = seen.iter().filter(|d| &d.entity_id == e).map(|d| &d.doc_id).collect();
            let want: Vec<_> = docs.iter().filter(|d| &d.entity_id == e).map(|d| &d.doc_id).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn embedding_filter_is_monotone_in_threshold(seed in 0u64..200, lo in -1.0f64..1.0, hi in -1.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let docs = stream(seed, 10);
        let criterion = "cardiac chest pain";
        let keep = |t: f64| -> Vec<String> {
            docs.iter()
                .filter(|d| sem_filter(d, criterion, Decision::Embedding, t, &SimulatedLlm).unwrap())
                .map(|d| d.doc_id.clone())
                .collect()
        };
        let loose: BTreeSet<_> = keep(lo).into_iter().collect();
        let strict: BTreeSet<_> = keep(hi).into_iter().collect();
        prop_assert!(strict.is_subset(&loose));
    }
}
