//! Brute-force reference matcher.
//!
//! Enumerates every non-empty subset of the stream and asks whether the
//! pattern can derive exactly that subset, in arrival order. Absence
//! constraints are collected as guard records during derivation and checked
//! against the whole finite stream afterwards, as if the watermark had
//! reached +∞. Nothing here touches the automaton code.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::pattern::{validate_pattern, PatternExpr, Violation};
use crate::types::SemanticEvent;

pub const MAX_ORACLE_EVENTS: usize = 8;
pub const MAX_ORACLE_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle accepts at most {MAX_ORACLE_EVENTS} events, got {0}")]
    TooManyEvents(usize),
    #[error("oracle accepts patterns of depth at most {MAX_ORACLE_DEPTH}, got {0}")]
    TooDeep(usize),
    #[error("events must share one entity and be sorted by timestamp")]
    UnsortedStream,
    #[error("invalid pattern: {0:?}")]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy)]
enum Deadline {
    /// Bound by the innermost enclosing window, not yet known.
    Open,
    At(i64),
}

#[derive(Debug, Clone)]
struct Absence<'p> {
    forbidden: &'p PatternExpr,
    /// Index of the event the absence starts after.
    after: usize,
    /// Index of the event that ends an interior absence.
    before: Option<usize>,
    deadline: Deadline,
}

type Derivation<'p> = Vec<Absence<'p>>;

struct Oracle<'a> {
    events: &'a [SemanticEvent],
}

/// Every match of `expr` in `events`, as tuples of event ids in arrival order.
pub fn oracle_match(
    expr: &PatternExpr,
    events: &[SemanticEvent],
) -> Result<BTreeSet<Vec<String>>, OracleError> {
    validate_pattern(expr).map_err(OracleError::Invalid)?;
    if events.len() > MAX_ORACLE_EVENTS {
        return Err(OracleError::TooManyEvents(events.len()));
    }
    if expr.depth() > MAX_ORACLE_DEPTH {
        return Err(OracleError::TooDeep(expr.depth()));
    }
    let sorted = events.windows(2).all(|w| {
        w[0].entity_id == w[1].entity_id && w[0].timestamp <= w[1].timestamp
    });
    if !sorted {
        return Err(OracleError::UnsortedStream);
    }

    let oracle = Oracle { events };
    let n = events.len();
    let mut out = BTreeSet::new();
    for mask in 1u32..(1u32 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let ok = oracle
            .derive(expr, &subset)
            .iter()
            .any(|d| d.iter().all(|a| oracle.holds(a)));
        if ok {
            out.insert(subset.iter().map(|&i| events[i].event_id.clone()).collect());
        }
    }
    Ok(out)
}

impl<'a> Oracle<'a> {
    fn ts(&self, i: usize) -> i64 {
        self.events[i].timestamp
    }

    fn atom_matches(&self, atom: &PatternExpr, i: usize) -> bool {
        let PatternExpr::Atom { event_type, guard } = atom else {
            return false;
        };
        let ev = &self.events[i];
        ev.event_type == *event_type && guard.as_ref().is_none_or(|g| g.eval(&ev.attrs))
    }

    fn holds(&self, a: &Absence<'_>) -> bool {
        let Deadline::At(deadline) = a.deadline else {
            // validation guarantees every absence sits under a window
            return false;
        };
        (a.after + 1..a.before.unwrap_or(self.events.len()))
            .filter(|&j| self.ts(j) <= deadline)
            .all(|j| !self.atom_matches(a.forbidden, j))
    }

    /// All ways `e` can consume exactly `slice`.
    fn derive<'p>(&self, e: &'p PatternExpr, slice: &[usize]) -> Vec<Derivation<'p>> {
        match e {
            PatternExpr::Atom { .. } => {
                if slice.len() == 1 && self.atom_matches(e, slice[0]) {
                    vec![Vec::new()]
                } else {
                    Vec::new()
                }
            }
            PatternExpr::Seq(xs) => {
                let parts: Vec<&PatternExpr> = xs.iter().collect();
                self.derive_seq(&parts, slice)
            }
            PatternExpr::And(l, r) => {
                let mut out = self.derive_seq(&[l, r], slice);
                out.extend(self.derive_seq(&[r, l], slice));
                out
            }
            PatternExpr::Or(l, r) => {
                let mut out = self.derive(l, slice);
                out.extend(self.derive(r, slice));
                out
            }
            PatternExpr::Times(c, n) => {
                let parts: Vec<&PatternExpr> = (0..*n).map(|_| c.as_ref()).collect();
                self.derive_seq(&parts, slice)
            }
            PatternExpr::OneOrMore(c) => {
                let mut out = Vec::new();
                for k in 1..=slice.len() {
                    let parts: Vec<&PatternExpr> = (0..k).map(|_| c.as_ref()).collect();
                    out.extend(self.derive_seq(&parts, slice));
                }
                out
            }
            PatternExpr::Optional(c) => {
                let mut out = self.derive(c, slice);
                if slice.is_empty() {
                    out.push(Vec::new());
                }
                out
            }
            PatternExpr::Within(c, w) => {
                let w = *w as i64;
                let inner = self.derive(c, slice);
                let Some(&first) = slice.first() else {
                    return inner;
                };
                let start = self.ts(first);
                let last = self.ts(*slice.last().unwrap());
                if last - start > w {
                    return Vec::new();
                }
                inner
                    .into_iter()
                    .filter_map(|mut d| {
                        for a in &mut d {
                            if let Deadline::Open = a.deadline {
                                a.deadline = Deadline::At(start + w);
                            }
                        }
                        let fits = d.iter().all(|a| match (a.before, a.deadline) {
                            (None, Deadline::At(t)) => t - start <= w,
                            _ => true,
                        });
                        fits.then_some(d)
                    })
                    .collect()
            }
            // a negation never stands alone once validated
            PatternExpr::Not(_) => Vec::new(),
        }
    }

    /// Splits `slice` into one consecutive chunk per element. Negation
    /// elements take an empty chunk and contribute an absence record bounded
    /// by the neighbouring chunks.
    fn derive_seq<'p>(&self, parts: &[&'p PatternExpr], slice: &[usize]) -> Vec<Derivation<'p>> {
        let mut out = Vec::new();
        self.seq_rec(parts, 0, slice, 0, None, Vec::new(), &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn seq_rec<'p>(
        &self,
        parts: &[&'p PatternExpr],
        k: usize,
        slice: &[usize],
        pos: usize,
        prev_last: Option<usize>,
        acc: Derivation<'p>,
        out: &mut Vec<Derivation<'p>>,
    ) {
        if k == parts.len() {
            if pos == slice.len() {
                out.push(acc);
            }
            return;
        }
        let part = parts[k];
        if let Some((forbidden, own)) = negation(part) {
            let Some(after) = prev_last else { return };
            let trailing = k + 1 == parts.len();
            let before = if trailing {
                None
            } else {
                match slice.get(pos) {
                    Some(&b) => Some(b),
                    None => return,
                }
            };
            let deadline = match own {
                Some(d) => Deadline::At(self.ts(after) + d as i64),
                None => Deadline::Open,
            };
            let mut acc = acc;
            acc.push(Absence {
                forbidden,
                after,
                before,
                deadline,
            });
            self.seq_rec(parts, k + 1, slice, pos, prev_last, acc, out);
            return;
        }
        for end in pos..=slice.len() {
            let chunk = &slice[pos..end];
            let last = chunk.last().copied().or(prev_last);
            for d in self.derive(part, chunk) {
                let mut next = acc.clone();
                next.extend(d);
                self.seq_rec(parts, k + 1, slice, end, last, next, out);
            }
        }
    }
}

fn negation(e: &PatternExpr) -> Option<(&PatternExpr, Option<u64>)> {
    match e {
        PatternExpr::Not(c) => Some((c, None)),
        PatternExpr::Within(inner, d) => match inner.as_ref() {
            PatternExpr::Not(c) => Some((c, Some(*d))),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::parse_pattern;

    fn ev(id: &str, ty: &str, ts: i64) -> SemanticEvent {
        SemanticEvent::new(id, "e", ty, ts)
    }

    fn run(p: &str, events: &[SemanticEvent]) -> Vec<Vec<String>> {
        oracle_match(&parse_pattern(p).unwrap(), events)
            .unwrap()
            .into_iter()
            .collect()
    }

    #[test]
    fn sequence_in_order() {
        assert_eq!(run("SEQ(A, B)", &[ev("a", "A", 1), ev("b", "B", 2)]), vec![vec!["a", "b"]]);
        assert!(run("SEQ(A, B)", &[ev("b", "B", 1), ev("a", "A", 2)]).is_empty());
    }

    #[test]
    fn conjunction_either_order_within_window() {
        let out = run("WITHIN(AND(A, B), 10 s)", &[ev("b", "B", 1), ev("a", "A", 5)]);
        assert_eq!(out, vec![vec!["b", "a"]]);
        assert!(run("WITHIN(AND(A, B), 3 s)", &[ev("b", "B", 1), ev("a", "A", 5)]).is_empty());
    }

    #[test]
    fn sequence_of_distinct_forced_events_matches_once() {
        let out = run("SEQ(A, B, C)", &[ev("a", "A", 1), ev("b", "B", 2), ev("c", "C", 3)]);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn optional_doubles_when_present() {
        let s = [ev("a", "A", 1), ev("b", "B", 2), ev("c", "C", 3)];
        assert_eq!(run("SEQ(A, C)", &s).len(), 1);
        assert_eq!(run("SEQ(A, OPTIONAL(B), C)", &s).len(), 2);
    }

    #[test]
    fn trailing_negation_cases() {
        let p = "WITHIN(SEQ(A, NOT(B)), 10 s)";
        assert_eq!(run(p, &[ev("a", "A", 0)]).len(), 1);
        assert!(run(p, &[ev("a", "A", 0), ev("b", "B", 5)]).is_empty());
        assert_eq!(run(p, &[ev("a", "A", 0), ev("b", "B", 15)]).len(), 1);
    }

    #[test]
    fn interior_negation_is_an_open_interval() {
        let p = "WITHIN(SEQ(A, NOT(B), C), 10 s)";
        let s = [ev("a", "A", 1), ev("b", "B", 1), ev("c", "C", 2)];
        assert!(run(p, &s).is_empty());
        let s = [ev("b", "B", 1), ev("a", "A", 1), ev("c", "C", 2), ev("b2", "B", 2)];
        assert_eq!(run(p, &s), vec![vec!["a", "c"]]);
    }

    #[test]
    fn one_or_more_counts_every_repetition() {
        let s = [ev("a1", "A", 1), ev("a2", "A", 2), ev("b", "B", 3)];
        let out = run("SEQ(ONE_OR_MORE(A), B)", &s);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn limits_are_enforced() {
        let many: Vec<_> = (0..9).map(|i| ev(&format!("x{i}"), "A", i)).collect();
        let err = oracle_match(&parse_pattern("A").unwrap(), &many).unwrap_err();
        assert_eq!(err, OracleError::TooManyEvents(9));
        let err = oracle_match(&parse_pattern("NOT(A)").unwrap(), &[]).unwrap_err();
        assert!(matches!(err, OracleError::Invalid(_)));
    }
}
