//! Compilation of pattern expressions into a shared automaton, plus the
//! per-entity runtime that drives it.
//!
//! The automaton uses three transition kinds. `Take` consumes an event that
//! satisfies its condition, `Ignore` lets a waiting instance skip any event,
//! and `Proceed` moves without consuming. Negations never become edges: they
//! compile to guards that an instance carries while it is in scope, and any
//! event satisfying a live guard kills the instance.

mod compile;
mod dot;
mod matcher;

use serde::{Deserialize, Serialize};

use crate::pattern::GuardPredicate;
use crate::types::SemanticEvent;

pub use compile::{compile, CompileError};
pub use dot::emit_dot;
pub use matcher::{
    EntityTrace, InstanceTrace, MatchError, MatcherConfig, MatcherState, MatcherTrace,
    DEFAULT_INSTANCE_CAP,
};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    Intermediate,
    Accept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionKind {
    Take,
    Ignore,
    Proceed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventCondition {
    pub event_type: String,
    pub guard: Option<GuardPredicate>,
}

impl EventCondition {
    pub fn matches(&self, ev: &SemanticEvent) -> bool {
        ev.event_type == self.event_type && self.guard.as_ref().is_none_or(|g| g.eval(&ev.attrs))
    }
}

impl std::fmt::Display for EventCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.event_type)?;
        if let Some(g) = &self.guard {
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Side effects attached to an edge, run after the edge is traversed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeAction {
    /// Arm negation guard `neg_guards[i]`.
    OpenGuard(usize),
    /// Forget the start time of these window regions (repetition back-edge).
    ResetRegions(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: TransitionKind,
    /// Set for `Take` edges only.
    pub condition: Option<EventCondition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<EdgeAction>,
    /// Window regions enclosing a `Take` edge, outermost first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundAnchor {
    /// Deadline counts from the last event of the preceding element.
    PrevElement,
    /// Deadline counts from the first event of the enclosing window.
    WindowStart,
}

/// A compiled negation: `forbidden` must not occur while the guard is live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegGuard {
    /// Node where the guard is armed and node where it stops mattering.
    pub active_between: (NodeId, NodeId),
    pub forbidden: EventCondition,
    /// Seconds after the anchor during which the guard is live.
    pub bound: u64,
    pub bound_anchor: BoundAnchor,
    /// Region whose start anchors the guard when `bound_anchor` is
    /// `WindowStart`.
    pub anchor_region: Option<usize>,
    /// Trailing guards end the match: acceptance waits for their deadline.
    /// Interior guards are disarmed by the instance's next `Take`.
    pub trailing: bool,
    /// Regions enclosing the negation; a trailing guard's deadline must fit
    /// in each of them.
    pub enclosing_regions: Vec<usize>,
}

/// One `WITHIN` scope: events taken inside it (and trailing absences armed
/// inside it) must fit in `bound` seconds after its first event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRegion {
    pub bound: u64,
}

/// Immutable compiled automaton, shared by every instance of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Nfa {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<Edge>,
    pub neg_guards: Vec<NegGuard>,
    pub regions: Vec<WindowRegion>,
    /// Bound of a top-level `WITHIN`, if the pattern has one.
    pub window: Option<u64>,
    #[serde(skip)]
    out: Vec<Vec<usize>>,
}

impl Nfa {
    pub fn start(&self) -> NodeId {
        0
    }

    pub fn accept_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == NodeKind::Accept)
            .map(|(i, _)| i)
    }

    pub fn is_accept(&self, node: NodeId) -> bool {
        self.nodes[node] == NodeKind::Accept
    }

    /// Outgoing edges of `node`.
    pub fn edges_from(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.out[node].iter().map(move |&i| &self.edges[i])
    }

    pub fn takes_from(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges_from(node).filter(|e| e.kind == TransitionKind::Take)
    }

    pub fn has_take(&self, node: NodeId) -> bool {
        self.takes_from(node).next().is_some()
    }

    pub fn edge_count(&self, kind: TransitionKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    fn index(&mut self) {
        self.out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            self.out[e.from].push(i);
        }
    }

    /// Nodes reachable from the start node.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.start()];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.edges_from(n).map(|e| e.to));
        }
        seen
    }
}
