use thiserror::Error;

use super::{
    BoundAnchor, Edge, EdgeAction, EventCondition, NegGuard, Nfa, NodeId, NodeKind,
    TransitionKind, WindowRegion,
};
use crate::pattern::{validate_pattern, PatternExpr, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("pattern failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Compiles a pattern into its automaton. The pattern is validated first,
/// so a `CompileError` always carries the offending violations.
pub fn compile(expr: &PatternExpr) -> Result<Nfa, CompileError> {
    validate_pattern(expr).map_err(CompileError::Invalid)?;
    let mut b = Builder::default();
    let start = b.node();
    let end = b.build(expr, start, false);
    b.nodes[end] = NodeKind::Accept;
    let accept = end;
    for g in &mut b.guards {
        if g.trailing {
            g.active_between.1 = accept;
        }
    }
    let window = match expr {
        PatternExpr::Within(_, d) => Some(*d),
        _ => None,
    };
    let mut nfa = Nfa {
        nodes: b.nodes,
        edges: b.edges,
        neg_guards: b.guards,
        regions: b.regions,
        window,
        out: Vec::new(),
    };
    contract(&mut nfa);
    add_ignore_loops(&mut nfa);
    nfa.index();
    Ok(nfa)
}

#[derive(Default)]
struct Builder {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    guards: Vec<NegGuard>,
    regions: Vec<WindowRegion>,
    region_stack: Vec<usize>,
}

fn condition_of(e: &PatternExpr) -> EventCondition {
    match e {
        PatternExpr::Atom { event_type, guard } => EventCondition {
            event_type: event_type.clone(),
            guard: guard.clone(),
        },
        // validation admits atoms only under NOT
        other => unreachable!("negation over non-atom {other}"),
    }
}

impl Builder {
    fn node(&mut self) -> NodeId {
        self.nodes.push(NodeKind::Intermediate);
        if self.nodes.len() == 1 {
            self.nodes[0] = NodeKind::Start;
        }
        self.nodes.len() - 1
    }

    fn proceed(&mut self, from: NodeId, to: NodeId, actions: Vec<EdgeAction>) {
        self.edges.push(Edge {
            from,
            to,
            kind: TransitionKind::Proceed,
            condition: None,
            actions,
            regions: Vec::new(),
        });
    }

    fn take(&mut self, from: NodeId, to: NodeId, cond: EventCondition) {
        self.edges.push(Edge {
            from,
            to,
            kind: TransitionKind::Take,
            condition: Some(cond),
            actions: Vec::new(),
            regions: self.region_stack.clone(),
        });
    }

    /// Builds `e` starting at `from` and returns the node reached once `e`
    /// has matched. `region_head` is set when `e` is the direct child of a
    /// window, so its first element's first event is the window start.
    fn build(&mut self, e: &PatternExpr, from: NodeId, region_head: bool) -> NodeId {
        match e {
            PatternExpr::Atom { .. } => {
                let to = self.node();
                self.take(from, to, condition_of(e));
                to
            }
            PatternExpr::Seq(xs) => self.build_seq(xs, from, region_head),
            PatternExpr::And(l, r) => {
                // either order, each as a sequence
                let join = self.node();
                for (a, b) in [(l, r), (r, l)] {
                    let s = self.node();
                    self.proceed(from, s, Vec::new());
                    let mid = self.build(a, s, false);
                    let end = self.build(b, mid, false);
                    self.proceed(end, join, Vec::new());
                }
                join
            }
            PatternExpr::Or(l, r) => {
                let join = self.node();
                for branch in [l, r] {
                    let s = self.node();
                    self.proceed(from, s, Vec::new());
                    let end = self.build(branch, s, false);
                    self.proceed(end, join, Vec::new());
                }
                join
            }
            PatternExpr::Times(c, n) => {
                let mut cur = from;
                for _ in 0..*n {
                    cur = self.build(c, cur, false);
                }
                cur
            }
            PatternExpr::OneOrMore(c) => {
                if let PatternExpr::Atom { .. } = c.as_ref() {
                    let to = self.node();
                    self.take(from, to, condition_of(c));
                    self.take(to, to, condition_of(c));
                    return to;
                }
                let loop_start = self.node();
                self.proceed(from, loop_start, Vec::new());
                let first_region = self.regions.len();
                let end = self.build(c, loop_start, false);
                let body_regions: Vec<usize> = (first_region..self.regions.len()).collect();
                let actions = if body_regions.is_empty() {
                    Vec::new()
                } else {
                    vec![EdgeAction::ResetRegions(body_regions)]
                };
                self.proceed(end, loop_start, actions);
                end
            }
            PatternExpr::Optional(c) => {
                let end = self.build(c, from, false);
                self.proceed(from, end, Vec::new());
                end
            }
            PatternExpr::Within(c, d) => {
                self.regions.push(WindowRegion { bound: *d });
                self.region_stack.push(self.regions.len() - 1);
                let end = self.build(c, from, true);
                self.region_stack.pop();
                end
            }
            PatternExpr::Not(_) => unreachable!("validation places negations inside sequences"),
        }
    }

    fn build_seq(&mut self, xs: &[PatternExpr], from: NodeId, region_head: bool) -> NodeId {
        let mut cur = from;
        let mut pending_interior: Option<usize> = None;
        for (i, x) in xs.iter().enumerate() {
            if let Some((target, own_bound)) = x.negation_target() {
                let (bound, bound_anchor, anchor_region) = match own_bound {
                    Some(d) => (d, BoundAnchor::PrevElement, None),
                    None => {
                        let r = *self
                            .region_stack
                            .last()
                            .expect("validation guarantees an enclosing window");
                        // The window opens on the previous element's only
                        // event: both anchors coincide.
                        let anchor = if region_head
                            && i == 1
                            && matches!(xs[0], PatternExpr::Atom { .. })
                        {
                            BoundAnchor::PrevElement
                        } else {
                            BoundAnchor::WindowStart
                        };
                        (self.regions[r].bound, anchor, Some(r))
                    }
                };
                let next = self.node();
                let id = self.guards.len();
                self.guards.push(NegGuard {
                    active_between: (next, next),
                    forbidden: condition_of(target),
                    bound,
                    bound_anchor,
                    anchor_region,
                    trailing: i + 1 == xs.len(),
                    enclosing_regions: self.region_stack.clone(),
                });
                self.proceed(cur, next, vec![EdgeAction::OpenGuard(id)]);
                if i + 1 < xs.len() {
                    pending_interior = Some(id);
                }
                cur = next;
            } else {
                cur = self.build(x, cur, false);
                if let Some(id) = pending_interior.take() {
                    self.guards[id].active_between.1 = cur;
                }
            }
        }
        cur
    }
}

/// Removes pass-through nodes: a non-start, non-accept node whose single
/// outgoing edge is a `Proceed` is merged into that edge's target, and the
/// edge's actions move onto the node's incoming edges.
fn contract(nfa: &mut Nfa) {
    let mut alive = vec![true; nfa.nodes.len()];
    loop {
        let mut changed = false;
        for u in 0..nfa.nodes.len() {
            if !alive[u] || nfa.nodes[u] != NodeKind::Intermediate {
                continue;
            }
            let outs: Vec<usize> = (0..nfa.edges.len()).filter(|&i| nfa.edges[i].from == u).collect();
            if outs.len() != 1 || nfa.edges[outs[0]].kind != TransitionKind::Proceed {
                continue;
            }
            let p = outs[0];
            let v = nfa.edges[p].to;
            if v == u {
                continue;
            }
            let ins: Vec<usize> = (0..nfa.edges.len()).filter(|&i| nfa.edges[i].to == u).collect();
            if ins.iter().any(|&i| nfa.edges[i].from == u || nfa.edges[i].from == v) {
                continue;
            }
            let actions = nfa.edges[p].actions.clone();
            for &i in &ins {
                nfa.edges[i].to = v;
                nfa.edges[i].actions.extend(actions.iter().cloned());
            }
            nfa.edges.remove(p);
            for g in &mut nfa.neg_guards {
                if g.active_between.0 == u {
                    g.active_between.0 = v;
                }
                if g.active_between.1 == u {
                    g.active_between.1 = v;
                }
            }
            alive[u] = false;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    // renumber surviving nodes densely
    let mut map = vec![usize::MAX; nfa.nodes.len()];
    let mut nodes = Vec::new();
    for (i, k) in nfa.nodes.iter().enumerate() {
        if alive[i] {
            map[i] = nodes.len();
            nodes.push(*k);
        }
    }
    nfa.nodes = nodes;
    for e in &mut nfa.edges {
        e.from = map[e.from];
        e.to = map[e.to];
    }
    for g in &mut nfa.neg_guards {
        g.active_between = (map[g.active_between.0], map[g.active_between.1]);
    }
}

fn add_ignore_loops(nfa: &mut Nfa) {
    for n in 1..nfa.nodes.len() {
        let waits = nfa
            .edges
            .iter()
            .any(|e| e.from == n && e.kind == TransitionKind::Take);
        if waits {
            nfa.edges.push(Edge {
                from: n,
                to: n,
                kind: TransitionKind::Ignore,
                condition: None,
                actions: Vec::new(),
                regions: Vec::new(),
            });
        }
    }
}
