use std::fmt;

use serde::{Deserialize, Serialize};

use super::PatternExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// A `NOT` with no enclosing `WITHIN`.
    UnboundedNegation,
    /// A `NOT` outside a sequence-element / window-child position, or one
    /// without a consuming neighbour to anchor its interval.
    MisplacedNegation,
    /// `NOT` applied to something other than a single event type.
    NonAtomicNegation,
    EmptySeq,
    /// `ONE_OR_MORE` nested (at any depth) inside another `ONE_OR_MORE`.
    NestedUnboundedQuantifier,
    /// `ONE_OR_MORE` over a body that can match without consuming an event.
    NullableRepetition,
    /// `TIMES` with a zero count.
    InvalidCount,
    /// `WITHIN` with a zero bound.
    InvalidDuration,
}

impl ViolationKind {
    pub fn code(&self) -> &'static str {
        match self {
            ViolationKind::UnboundedNegation => "UnboundedNegation",
            ViolationKind::MisplacedNegation => "MisplacedNegation",
            ViolationKind::NonAtomicNegation => "NonAtomicNegation",
            ViolationKind::EmptySeq => "EmptySeq",
            ViolationKind::NestedUnboundedQuantifier => "NestedUnboundedQuantifier",
            ViolationKind::NullableRepetition => "NullableRepetition",
            ViolationKind::InvalidCount => "InvalidCount",
            ViolationKind::InvalidDuration => "DurationError",
        }
    }
}

/// One problem found in a pattern. `path` lists child indices from the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.code(), self.message)?;
        if !self.path.is_empty() {
            let p: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
            write!(f, " (at {})", p.join("."))?;
        }
        Ok(())
    }
}

/// Checks the structural rules a pattern must satisfy before compilation.
/// Violations are returned as values, never as a panic.
pub fn validate_pattern(expr: &PatternExpr) -> Result<(), Vec<Violation>> {
    let mut v = Validator { out: Vec::new(), path: Vec::new() };
    v.walk(expr, Ctx::default(), Position::Free);
    if v.out.is_empty() {
        Ok(())
    } else {
        Err(v.out)
    }
}

#[derive(Clone, Copy, Default)]
struct Ctx {
    in_within: bool,
    in_one_or_more: bool,
}

/// Where a node sits relative to its parent, as far as negation placement
/// is concerned.
#[derive(Clone, Copy, PartialEq)]
enum Position {
    Free,
    /// Direct element of a sequence whose neighbours anchor a negation.
    AnchoredSeqElement,
    /// Direct element of a sequence, but without a usable anchor.
    UnanchoredSeqElement,
    /// Child of a `WITHIN` that itself is an anchored sequence element.
    WindowedNegationSlot,
}

struct Validator {
    out: Vec<Violation>,
    path: Vec<usize>,
}

impl Validator {
    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.out.push(Violation {
            kind,
            path: self.path.clone(),
            message: message.into(),
        });
    }

    fn child(&mut self, idx: usize, e: &PatternExpr, ctx: Ctx, pos: Position) {
        self.path.push(idx);
        self.walk(e, ctx, pos);
        self.path.pop();
    }

    fn walk(&mut self, e: &PatternExpr, ctx: Ctx, pos: Position) {
        match e {
            PatternExpr::Atom { .. } => {}
            PatternExpr::Not(c) => {
                if !ctx.in_within {
                    self.push(
                        ViolationKind::UnboundedNegation,
                        "negation must be bounded by an enclosing WITHIN",
                    );
                }
                match pos {
                    Position::AnchoredSeqElement | Position::WindowedNegationSlot => {}
                    Position::UnanchoredSeqElement => self.push(
                        ViolationKind::MisplacedNegation,
                        "negation needs a consuming element right before it and, if not last, right after it",
                    ),
                    _ => self.push(
                        ViolationKind::MisplacedNegation,
                        "negation may only appear as a sequence element or as the child of a WITHIN that is a sequence element",
                    ),
                }
                if !matches!(c.as_ref(), PatternExpr::Atom { .. }) {
                    self.push(
                        ViolationKind::NonAtomicNegation,
                        "negation applies to a single event type",
                    );
                }
                // nested negations are reported on their own
                self.child(0, c, ctx, Position::Free);
            }
            PatternExpr::Seq(xs) => {
                if xs.is_empty() {
                    self.push(ViolationKind::EmptySeq, "SEQ needs at least one element");
                }
                for (i, x) in xs.iter().enumerate() {
                    let pos = if x.negation_target().is_some() {
                        if negation_is_anchored(xs, i) {
                            Position::AnchoredSeqElement
                        } else {
                            Position::UnanchoredSeqElement
                        }
                    } else {
                        Position::Free
                    };
                    self.child(i, x, ctx, pos);
                }
            }
            PatternExpr::And(l, r) | PatternExpr::Or(l, r) => {
                self.child(0, l, ctx, Position::Free);
                self.child(1, r, ctx, Position::Free);
            }
            PatternExpr::Times(c, n) => {
                if *n == 0 {
                    self.push(ViolationKind::InvalidCount, "TIMES count must be at least 1");
                }
                self.child(0, c, ctx, Position::Free);
            }
            PatternExpr::OneOrMore(c) => {
                if ctx.in_one_or_more {
                    self.push(
                        ViolationKind::NestedUnboundedQuantifier,
                        "ONE_OR_MORE cannot be nested inside another ONE_OR_MORE",
                    );
                }
                if c.is_nullable() {
                    self.push(
                        ViolationKind::NullableRepetition,
                        "ONE_OR_MORE body must consume at least one event",
                    );
                }
                let inner = Ctx { in_one_or_more: true, ..ctx };
                self.child(0, c, inner, Position::Free);
            }
            PatternExpr::Optional(c) => self.child(0, c, ctx, Position::Free),
            PatternExpr::Within(c, d) => {
                if *d == 0 {
                    self.push(ViolationKind::InvalidDuration, "WITHIN bound must be positive");
                }
                let inner = Ctx { in_within: true, ..ctx };
                let child_pos = match (pos, c.as_ref()) {
                    (Position::AnchoredSeqElement, PatternExpr::Not(_)) => Position::WindowedNegationSlot,
                    (Position::UnanchoredSeqElement, PatternExpr::Not(_)) => Position::UnanchoredSeqElement,
                    _ => Position::Free,
                };
                self.child(0, c, inner, child_pos);
            }
        }
    }
}

/// A negation at `xs[i]` needs a consuming, non-negated element right
/// before it, and (unless it is last) one right after it.
fn negation_is_anchored(xs: &[PatternExpr], i: usize) -> bool {
    let consuming = |e: &PatternExpr| e.negation_target().is_none() && !e.is_nullable();
    if i == 0 || !consuming(&xs[i - 1]) {
        return false;
    }
    match xs.get(i + 1) {
        None => true,
        Some(next) => consuming(next),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::parse_pattern;

    fn kinds(text: &str) -> Vec<ViolationKind> {
        match validate_pattern(&parse_pattern(text).unwrap()) {
            Ok(()) => vec![],
            Err(vs) => vs.into_iter().map(|v| v.kind).collect(),
        }
    }

    #[test]
    fn bare_negation_is_unbounded() {
        let vs = validate_pattern(&PatternExpr::not(PatternExpr::atom("B"))).unwrap_err();
        assert!(vs.iter().any(|v| v.kind == ViolationKind::UnboundedNegation));
    }

    #[test]
    fn windowed_trailing_negation_ok() {
        assert_eq!(kinds("WITHIN(SEQ(A, NOT(B)), 10 s)"), vec![]);
        assert_eq!(kinds("SEQ(Discharge, WITHIN(NOT(FollowUp), 30 days))"), vec![]);
        assert_eq!(kinds("WITHIN(SEQ(A, NOT(B), C), 10 s)"), vec![]);
    }

    #[test]
    fn empty_seq_flagged() {
        let vs = validate_pattern(&PatternExpr::Seq(vec![])).unwrap_err();
        assert_eq!(vs[0].kind, ViolationKind::EmptySeq);
    }

    #[test]
    fn seq_negation_without_window_is_unbounded() {
        assert_eq!(kinds("SEQ(A, NOT(B))"), vec![ViolationKind::UnboundedNegation]);
    }

    #[test]
    fn misplaced_negations() {
        assert!(kinds("WITHIN(OR(A, NOT(B)), 5 s)").contains(&ViolationKind::MisplacedNegation));
        assert!(kinds("WITHIN(SEQ(NOT(B), A), 5 s)").contains(&ViolationKind::MisplacedNegation));
        assert!(kinds("WITHIN(SEQ(A, NOT(B), NOT(C)), 5 s)").contains(&ViolationKind::MisplacedNegation));
        assert!(kinds("WITHIN(SEQ(A, NOT(B), OPTIONAL(C)), 5 s)").contains(&ViolationKind::MisplacedNegation));
        assert!(kinds("WITHIN(NOT(B), 5 s)").contains(&ViolationKind::MisplacedNegation));
        assert!(kinds("WITHIN(SEQ(A, NOT(SEQ(B, C))), 5 s)").contains(&ViolationKind::NonAtomicNegation));
    }

    #[test]
    fn quantifier_rules() {
        assert_eq!(
            kinds("ONE_OR_MORE(SEQ(A, ONE_OR_MORE(B)))"),
            vec![ViolationKind::NestedUnboundedQuantifier]
        );
        assert_eq!(kinds("ONE_OR_MORE(OPTIONAL(A))"), vec![ViolationKind::NullableRepetition]);
        assert_eq!(kinds("TIMES(OPTIONAL(A), 2)"), vec![]);
        let vs = validate_pattern(&PatternExpr::times(PatternExpr::atom("A"), 0)).unwrap_err();
        assert_eq!(vs[0].kind, ViolationKind::InvalidCount);
        let vs = validate_pattern(&PatternExpr::within(PatternExpr::atom("A"), 0)).unwrap_err();
        assert_eq!(vs[0].kind, ViolationKind::InvalidDuration);
    }

    #[test]
    fn violation_paths_point_at_node() {
        let vs = validate_pattern(&parse_pattern("SEQ(A, WITHIN(SEQ(B, NOT(C)), 5 s), NOT(D))").unwrap())
            .unwrap_err();
        let unbounded: Vec<_> = vs.iter().filter(|v| v.kind == ViolationKind::UnboundedNegation).collect();
        assert_eq!(unbounded.len(), 1);
        assert_eq!(unbounded[0].path, vec![2]);
    }
}
