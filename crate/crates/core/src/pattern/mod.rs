//! Pattern expressions over semantic event types.
//!
//! Text form (keywords are case-insensitive):
//!
//! ```text
//! expr     := SEQ(expr, ...) | AND(expr, expr) | OR(expr, expr) | NOT(expr)
//!           | TIMES(expr, int) | ONE_OR_MORE(expr) | OPTIONAL(expr)
//!           | WITHIN(expr, duration) | ident [ '{' guard '}' ]
//! guard    := key op literal (',' key op literal)*      op := = | != | contains
//! duration := int ( s | min | h | days )
//! ```
//!
//! Durations are normalized to whole seconds when parsed.

pub(crate) mod format;
mod parse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{parse_pattern, ParseError};
pub use validate::{validate_pattern, Violation, ViolationKind};

pub const SECONDS_PER_MINUTE: u64 = 60;
pub const SECONDS_PER_HOUR: u64 = 3_600;
pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuardOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "contains")]
    Contains,
}

impl fmt::Display for GuardOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuardOp::Eq => "=",
            GuardOp::Ne => "!=",
            GuardOp::Contains => "contains",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuardClause {
    pub key: String,
    pub op: GuardOp,
    pub literal: String,
}

/// Conjunction of attribute tests. An absent key never matches, whatever
/// the operator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuardPredicate {
    pub clauses: Vec<GuardClause>,
}

impl GuardPredicate {
    pub fn new(clauses: Vec<GuardClause>) -> Self {
        GuardPredicate { clauses }
    }

    pub fn eval(&self, attrs: &BTreeMap<String, String>) -> bool {
        self.clauses.iter().all(|c| match attrs.get(&c.key) {
            None => false,
            Some(v) => match c.op {
                GuardOp::Eq => *v == c.literal,
                GuardOp::Ne => *v != c.literal,
                GuardOp::Contains => v.contains(c.literal.as_str()),
            },
        })
    }
}

/// AST of the pattern language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternExpr {
    Atom {
        event_type: String,
        guard: Option<GuardPredicate>,
    },
    Seq(Vec<PatternExpr>),
    And(Box<PatternExpr>, Box<PatternExpr>),
    Or(Box<PatternExpr>, Box<PatternExpr>),
    Not(Box<PatternExpr>),
    Times(Box<PatternExpr>, u32),
    OneOrMore(Box<PatternExpr>),
    Optional(Box<PatternExpr>),
    /// Bound in seconds.
    Within(Box<PatternExpr>, u64),
}

impl PatternExpr {
    pub fn atom(event_type: impl Into<String>) -> Self {
        PatternExpr::Atom {
            event_type: event_type.into(),
            guard: None,
        }
    }

    pub fn guarded(event_type: impl Into<String>, guard: GuardPredicate) -> Self {
        PatternExpr::Atom {
            event_type: event_type.into(),
            guard: Some(guard),
        }
    }

    pub fn seq(children: Vec<PatternExpr>) -> Self {
        PatternExpr::Seq(children)
    }

    pub fn and(l: PatternExpr, r: PatternExpr) -> Self {
        PatternExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: PatternExpr, r: PatternExpr) -> Self {
        PatternExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn not(c: PatternExpr) -> Self {
        PatternExpr::Not(Box::new(c))
    }

    pub fn times(c: PatternExpr, n: u32) -> Self {
        PatternExpr::Times(Box::new(c), n)
    }

    pub fn one_or_more(c: PatternExpr) -> Self {
        PatternExpr::OneOrMore(Box::new(c))
    }

    pub fn optional(c: PatternExpr) -> Self {
        PatternExpr::Optional(Box::new(c))
    }

    pub fn within(c: PatternExpr, seconds: u64) -> Self {
        PatternExpr::Within(Box::new(c), seconds)
    }

    /// True when the expression can be satisfied without consuming any
    /// event. A bare `Not` is treated as nullable; it never consumes.
    pub fn is_nullable(&self) -> bool {
        match self {
            PatternExpr::Atom { .. } => false,
            PatternExpr::Seq(xs) => xs.iter().all(|x| x.is_nullable()),
            PatternExpr::And(l, r) => l.is_nullable() && r.is_nullable(),
            PatternExpr::Or(l, r) => l.is_nullable() || r.is_nullable(),
            PatternExpr::Not(_) => true,
            PatternExpr::Times(c, _) => c.is_nullable(),
            PatternExpr::OneOrMore(c) => c.is_nullable(),
            PatternExpr::Optional(_) => true,
            PatternExpr::Within(c, _) => c.is_nullable(),
        }
    }

    /// Nesting depth; an atom has depth 1.
    pub fn depth(&self) -> usize {
        1 + match self {
            PatternExpr::Atom { .. } => 0,
            PatternExpr::Seq(xs) => xs.iter().map(|x| x.depth()).max().unwrap_or(0),
            PatternExpr::And(l, r) | PatternExpr::Or(l, r) => l.depth().max(r.depth()),
            PatternExpr::Not(c)
            | PatternExpr::Times(c, _)
            | PatternExpr::OneOrMore(c)
            | PatternExpr::Optional(c)
            | PatternExpr::Within(c, _) => c.depth(),
        }
    }

    /// Whether this is a negation element, either bare or wrapped in its own
    /// window.
    pub(crate) fn negation_target(&self) -> Option<(&PatternExpr, Option<u64>)> {
        match self {
            PatternExpr::Not(c) => Some((c, None)),
            PatternExpr::Within(inner, d) => match inner.as_ref() {
                PatternExpr::Not(c) => Some((c, Some(*d))),
                _ => None,
            },
            _ => None,
        }
    }

    /// Event types mentioned anywhere in the expression, in first-seen order.
    pub fn event_types(&self) -> Vec<String> {
        fn walk(e: &PatternExpr, out: &mut Vec<String>) {
            match e {
                PatternExpr::Atom { event_type, .. } => {
                    if !out.contains(event_type) {
                        out.push(event_type.clone());
                    }
                }
                PatternExpr::Seq(xs) => xs.iter().for_each(|x| walk(x, out)),
                PatternExpr::And(l, r) | PatternExpr::Or(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                PatternExpr::Not(c)
                | PatternExpr::Times(c, _)
                | PatternExpr::OneOrMore(c)
                | PatternExpr::Optional(c)
                | PatternExpr::Within(c, _) => walk(c, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl std::str::FromStr for PatternExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pattern(s)
    }
}

/// Canonical text for an expression; `parse_pattern(&format_pattern(e)) == e`.
pub fn format_pattern(expr: &PatternExpr) -> String {
    expr.to_string()
}
