use std::fmt::Write;

use super::{BoundAnchor, EdgeAction, Nfa, NodeKind, TransitionKind};
use crate::pattern::format::format_duration;

/// Renders the automaton in Graphviz dot syntax. Negation guards appear as
/// unconnected note nodes so edge counts reflect transitions only.
pub fn emit_dot(nfa: &Nfa) -> String {
    let mut out = String::from("digraph nfa {\n  rankdir=LR;\n");
    for (i, kind) in nfa.nodes.iter().enumerate() {
        let (label, shape) = match kind {
            NodeKind::Start => ("start", "circle"),
            NodeKind::Intermediate => ("intermediate", "circle"),
            NodeKind::Accept => ("accept", "doublecircle"),
        };
        let _ = writeln!(out, "  n{i} [label=\"{i}: {label}\", shape={shape}];");
    }
    for e in &nfa.edges {
        let mut label = match e.kind {
            TransitionKind::Take => format!("Take:{}", e.condition.as_ref().map(|c| c.to_string()).unwrap_or_default()),
            TransitionKind::Ignore => "Ignore".to_string(),
            TransitionKind::Proceed => "Proceed".to_string(),
        };
        for a in &e.actions {
            match a {
                EdgeAction::OpenGuard(g) => {
                    let _ = write!(label, " / arm g{g}");
                }
                EdgeAction::ResetRegions(rs) => {
                    let _ = write!(label, " / reset {rs:?}");
                }
            }
        }
        let style = match e.kind {
            TransitionKind::Ignore => ", style=dotted",
            TransitionKind::Proceed => ", style=dashed",
            TransitionKind::Take => "",
        };
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"{style}];", e.from, e.to, escape(&label));
    }
    for (i, g) in nfa.neg_guards.iter().enumerate() {
        let anchor = match g.bound_anchor {
            BoundAnchor::PrevElement => "prev_element",
            BoundAnchor::WindowStart => "window_start",
        };
        let kind = if g.trailing { "trailing" } else { "interior" };
        let label = format!(
            "g{i}: NOT {} for {} from {anchor} ({kind}, n{}..n{})",
            g.forbidden,
            format_duration(g.bound),
            g.active_between.0,
            g.active_between.1
        );
        let _ = writeln!(out, "  g{i} [shape=note, label=\"{}\"];", escape(&label));
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
