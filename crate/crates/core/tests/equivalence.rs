use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semflow_core::harness::{oracle_match, random_pattern, random_stream};
use semflow_core::nfa::{compile, MatcherConfig, MatcherState};
use semflow_core::pattern::PatternExpr;
use semflow_core::SemanticEvent;

fn nfa_matches(p: &PatternExpr, events: &[SemanticEvent]) -> BTreeSet<Vec<String>> {
    let nfa = compile(p).unwrap();
    let mut m = MatcherState::new(Arc::new(nfa), "p", MatcherConfig::default());
    let mut out = Vec::new();
    for e in events {
        out.extend(m.advance(e).unwrap());
    }
    out.extend(m.flush());
    let set: BTreeSet<_> = out.iter().map(|m| m.event_ids()).collect();
    assert_eq!(set.len(), out.len(), "duplicate emission for {p}");
    set
}

#[test]
fn matcher_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..2000 {
        let p = random_pattern(&mut rng, 4);
        let s = random_stream(&mut rng, 8);
        let expected = oracle_match(&p, &s).unwrap();
        let got = nfa_matches(&p, &s);
        assert_eq!(
            got,
            expected,
            "case {case}: {p} over {:?}",
            s.iter().map(|e| &e.event_id).collect::<Vec<_>>()
        );
    }
}
