use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EdgeAction, Edge, Nfa, NodeId, TransitionKind};
use crate::types::{PatternMatch, SemanticEvent};

pub const DEFAULT_INSTANCE_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Maximum live instances per entity. Exceeding it is an error.
    pub instance_cap: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            instance_cap: DEFAULT_INSTANCE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("entity {entity_id}: {active} active instances exceed the cap of {cap}")]
    InstanceCapExceeded {
        entity_id: String,
        active: usize,
        cap: usize,
    },
    #[error("entity {entity_id}: event {event_id} at {timestamp} is older than watermark {watermark}")]
    OutOfOrder {
        entity_id: String,
        event_id: String,
        timestamp: i64,
        watermark: i64,
    },
}

#[derive(Debug, Clone)]
struct EventRef {
    seq: u64,
    ev: Arc<SemanticEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ArmedGuard {
    guard: usize,
    deadline: i64,
    interior: bool,
}

/// One partial match: a position in the shared automaton plus its own
/// matched events, window starts and armed guards.
#[derive(Debug, Clone)]
struct Instance {
    id: u64,
    node: NodeId,
    matched: Vec<EventRef>,
    region_starts: Vec<Option<i64>>,
    guards: Vec<ArmedGuard>,
    last_effective: i64,
}

type InstanceKey = (NodeId, Vec<u64>, Vec<Option<i64>>, Vec<ArmedGuard>);

impl Instance {
    fn key(&self) -> InstanceKey {
        (
            self.node,
            self.matched.iter().map(|e| e.seq).collect(),
            self.region_starts.clone(),
            self.guards.clone(),
        )
    }

    fn seqs(&self) -> Vec<u64> {
        self.matched.iter().map(|e| e.seq).collect()
    }
}

/// An accepted instance still waiting out a trailing absence.
#[derive(Debug, Clone)]
struct Pending {
    matched: Vec<EventRef>,
    guards: Vec<ArmedGuard>,
    last_effective: i64,
}

#[derive(Debug, Default)]
struct EntityState {
    watermark: Option<i64>,
    instances: Vec<Instance>,
    pending: Vec<Pending>,
    emitted: HashSet<Vec<u64>>,
}

/// Per-entity runtime for one compiled pattern.
///
/// Calls for one entity must be serialized; the state for different
/// entities is independent.
#[derive(Debug)]
pub struct MatcherState {
    nfa: Arc<Nfa>,
    pattern_id: String,
    config: MatcherConfig,
    entities: BTreeMap<String, EntityState>,
    /// Instances reachable from the start node before any event.
    seeds: Vec<Instance>,
    next_seq: u64,
    next_instance: u64,
    emitted: Vec<PatternMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceTrace {
    pub instance_id: u64,
    pub node: NodeId,
    pub matched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTrace {
    pub entity_id: String,
    pub watermark: Option<i64>,
    pub active_instances: usize,
    pub pending_matches: usize,
    pub instances: Vec<InstanceTrace>,
}

/// Read-only view of a matcher, served on the trace endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherTrace {
    pub pattern_id: String,
    pub entities: Vec<EntityTrace>,
    pub matches: Vec<PatternMatch>,
}

impl MatcherState {
    pub fn new(nfa: Arc<Nfa>, pattern_id: impl Into<String>, config: MatcherConfig) -> Self {
        let mut m = MatcherState {
            nfa,
            pattern_id: pattern_id.into(),
            config,
            entities: BTreeMap::new(),
            seeds: Vec::new(),
            next_seq: 0,
            next_instance: 0,
            emitted: Vec::new(),
        };
        let root = Instance {
            id: 0,
            node: m.nfa.start(),
            matched: Vec::new(),
            region_starts: vec![None; m.nfa.regions.len()],
            guards: Vec::new(),
            last_effective: i64::MIN,
        };
        let mut seeds = Vec::new();
        let mut accepted = Vec::new();
        m.closure(root, &mut seeds, &mut accepted);
        // an empty match is never reported
        m.seeds = seeds;
        m
    }

    pub fn nfa(&self) -> &Nfa {
        &self.nfa
    }

    pub fn pattern_id(&self) -> &str {
        &self.pattern_id
    }

    /// Total live instances for `entity_id`.
    pub fn active_instances(&self, entity_id: &str) -> usize {
        self.entities.get(entity_id).map_or(0, |s| s.instances.len())
    }

    pub fn watermark(&self, entity_id: &str) -> Option<i64> {
        self.entities.get(entity_id).and_then(|s| s.watermark)
    }

    /// Feeds one event. Deadlines that ended before the event's timestamp
    /// are resolved first, then every live instance of the entity either
    /// dies on a forbidden event, branches on a matching `Take`, or skips
    /// the event.
    pub fn advance(&mut self, ev: &SemanticEvent) -> Result<Vec<PatternMatch>, MatchError> {
        let ts = ev.timestamp;
        let watermark = self.entities.get(&ev.entity_id).and_then(|s| s.watermark);
        if let Some(w) = watermark {
            if ts < w {
                return Err(MatchError::OutOfOrder {
                    entity_id: ev.entity_id.clone(),
                    event_id: ev.event_id.clone(),
                    timestamp: ts,
                    watermark: w,
                });
            }
        }
        let mut state = self.entities.remove(&ev.entity_id).unwrap_or_default();
        let mut out = self.expire(&ev.entity_id, &mut state, ts, Some(ts));

        let evref = EventRef {
            seq: self.next_seq,
            ev: Arc::new(ev.clone()),
        };
        self.next_seq += 1;

        let nfa = Arc::clone(&self.nfa);
        let forbids = |g: &ArmedGuard| {
            ts <= g.deadline && nfa.neg_guards[g.guard].forbidden.matches(ev)
        };

        state.pending.retain(|p| !p.guards.iter().any(&forbids));

        let mut next = Vec::new();
        let mut accepted = Vec::new();
        for inst in std::mem::take(&mut state.instances) {
            let takes: Vec<&Edge> = nfa
                .takes_from(inst.node)
                .filter(|e| e.condition.as_ref().is_some_and(|c| c.matches(ev)))
                .collect();
            let mut branches = Vec::new();
            for edge in takes {
                if let Some(taken) = self.take(&inst, edge, &evref) {
                    branches.push(taken);
                }
            }
            if !inst.guards.iter().any(&forbids) {
                next.push(inst);
            }
            for b in branches {
                self.closure(b, &mut next, &mut accepted);
            }
        }
        let seeds = std::mem::take(&mut self.seeds);
        for seed in &seeds {
            for edge in nfa.takes_from(seed.node) {
                if !edge.condition.as_ref().is_some_and(|c| c.matches(ev)) {
                    continue;
                }
                if let Some(taken) = self.take(seed, edge, &evref) {
                    self.closure(taken, &mut next, &mut accepted);
                }
            }
        }
        self.seeds = seeds;

        for inst in accepted {
            if inst.guards.is_empty() {
                if let Some(m) = self.emit(&ev.entity_id, &mut state, &inst.matched, inst.last_effective, Some(ts)) {
                    out.push(m);
                }
            } else if !state.emitted.contains(&inst.seqs()) {
                state.pending.push(Pending {
                    matched: inst.matched,
                    guards: inst.guards,
                    last_effective: inst.last_effective,
                });
            }
        }

        let mut seen = HashSet::new();
        next.retain(|i| seen.insert(i.key()));
        let active = next.len();
        state.instances = next;
        state.watermark = Some(ts);
        self.entities.insert(ev.entity_id.clone(), state);
        if active > self.config.instance_cap {
            return Err(MatchError::InstanceCapExceeded {
                entity_id: ev.entity_id.clone(),
                active,
                cap: self.config.instance_cap,
            });
        }
        Ok(out)
    }

    /// Advances the entity's watermark without an event: trailing absences
    /// whose deadline is before `watermark` are accepted and instances whose
    /// windows can no longer be satisfied are dropped.
    pub fn on_watermark(&mut self, entity_id: &str, watermark: i64) -> Vec<PatternMatch> {
        let Some(mut state) = self.entities.remove(entity_id) else {
            return Vec::new();
        };
        let out = if state.watermark.is_none_or(|w| watermark >= w) {
            let out = self.expire(entity_id, &mut state, watermark, Some(watermark));
            state.watermark = Some(watermark);
            out
        } else {
            Vec::new()
        };
        self.entities.insert(entity_id.to_string(), state);
        out
    }

    /// End of stream: every surviving deferred match is emitted and all
    /// instances are discarded. A second call returns nothing.
    pub fn flush(&mut self) -> Vec<PatternMatch> {
        let mut out = Vec::new();
        let ids: Vec<String> = self.entities.keys().cloned().collect();
        for id in ids {
            let mut state = self.entities.remove(&id).unwrap_or_default();
            for p in std::mem::take(&mut state.pending) {
                if let Some(m) = self.emit(&id, &mut state, &p.matched, p.last_effective, None) {
                    out.push(m);
                }
            }
            state.instances.clear();
            self.entities.insert(id, state);
        }
        out
    }

    pub fn snapshot(&self) -> MatcherTrace {
        MatcherTrace {
            pattern_id: self.pattern_id.clone(),
            entities: self
                .entities
                .iter()
                .map(|(id, s)| EntityTrace {
                    entity_id: id.clone(),
                    watermark: s.watermark,
                    active_instances: s.instances.len(),
                    pending_matches: s.pending.len(),
                    instances: s
                        .instances
                        .iter()
                        .map(|i| InstanceTrace {
                            instance_id: i.id,
                            node: i.node,
                            matched: i.matched.iter().map(|e| e.ev.event_id.clone()).collect(),
                        })
                        .collect(),
                })
                .collect(),
            matches: self.emitted.clone(),
        }
    }

    fn expire(
        &mut self,
        entity_id: &str,
        state: &mut EntityState,
        watermark: i64,
        emitted_at: Option<i64>,
    ) -> Vec<PatternMatch> {
        let mut out = Vec::new();
        let mut still_pending = Vec::new();
        for mut p in std::mem::take(&mut state.pending) {
            p.guards.retain(|g| g.deadline >= watermark);
            if p.guards.is_empty() {
                if let Some(m) = self.emit(entity_id, state, &p.matched, p.last_effective, emitted_at) {
                    out.push(m);
                }
            } else {
                still_pending.push(p);
            }
        }
        state.pending = still_pending;

        let nfa = &self.nfa;
        state.instances.retain_mut(|inst| {
            inst.guards.retain(|g| g.deadline >= watermark);
            nfa.takes_from(inst.node).any(|e| {
                e.regions.iter().all(|&r| match inst.region_starts[r] {
                    Some(s) => watermark <= s.saturating_add(nfa.regions[r].bound as i64),
                    None => true,
                })
            })
        });
        out
    }

    fn emit(
        &mut self,
        entity_id: &str,
        state: &mut EntityState,
        matched: &[EventRef],
        last_effective: i64,
        emitted_at: Option<i64>,
    ) -> Option<PatternMatch> {
        let key: Vec<u64> = matched.iter().map(|e| e.seq).collect();
        if matched.is_empty() || !state.emitted.insert(key) {
            return None;
        }
        let first = matched[0].ev.timestamp;
        let m = PatternMatch {
            pattern_id: self.pattern_id.clone(),
            entity_id: entity_id.to_string(),
            events: matched.iter().map(|e| (*e.ev).clone()).collect(),
            window: (first, last_effective),
            emitted_at,
        };
        self.emitted.push(m.clone());
        Some(m)
    }

    /// Clones `inst` across a `Take` edge. Returns `None` when the event is
    /// forbidden by a still-armed guard or falls outside an enclosing window.
    fn take(&mut self, inst: &Instance, edge: &Edge, ev: &EventRef) -> Option<Instance> {
        debug_assert_eq!(edge.kind, TransitionKind::Take);
        let ts = ev.ev.timestamp;
        let mut next = inst.clone();
        next.id = self.fresh_id();
        // the next take closes every interior absence
        next.guards.retain(|g| !g.interior);
        if next
            .guards
            .iter()
            .any(|g| ts <= g.deadline && self.nfa.neg_guards[g.guard].forbidden.matches(&ev.ev))
        {
            return None;
        }
        for &r in &edge.regions {
            match next.region_starts[r] {
                None => next.region_starts[r] = Some(ts),
                Some(s) => {
                    if ts - s > self.nfa.regions[r].bound as i64 {
                        return None;
                    }
                }
            }
        }
        next.matched.push(ev.clone());
        next.last_effective = next.last_effective.max(ts);
        next.node = edge.to;
        if !self.apply(&mut next, &edge.actions) {
            return None;
        }
        Some(next)
    }

    fn apply(&self, inst: &mut Instance, actions: &[EdgeAction]) -> bool {
        for a in actions {
            match a {
                EdgeAction::OpenGuard(g) => {
                    let def = &self.nfa.neg_guards[*g];
                    let prev = inst.matched.last().map(|e| e.ev.timestamp).unwrap_or(0);
                    let anchor = match def.bound_anchor {
                        super::BoundAnchor::PrevElement => prev,
                        super::BoundAnchor::WindowStart => def
                            .anchor_region
                            .and_then(|r| inst.region_starts[r])
                            .unwrap_or(prev),
                    };
                    let deadline = anchor.saturating_add(def.bound as i64);
                    if def.trailing {
                        for &r in &def.enclosing_regions {
                            if let Some(s) = inst.region_starts[r] {
                                if deadline - s > self.nfa.regions[r].bound as i64 {
                                    return false;
                                }
                            }
                        }
                        inst.last_effective = inst.last_effective.max(deadline);
                    }
                    inst.guards.push(ArmedGuard {
                        guard: *g,
                        deadline,
                        interior: !def.trailing,
                    });
                }
                EdgeAction::ResetRegions(rs) => {
                    for &r in rs {
                        inst.region_starts[r] = None;
                    }
                }
            }
        }
        true
    }

    /// Follows `Proceed` edges from `inst`, collecting instances that wait
    /// on a `Take` and instances that reached an accept node.
    fn closure(&mut self, inst: Instance, waiting: &mut Vec<Instance>, accepted: &mut Vec<Instance>) {
        let mut stack = vec![inst];
        let mut seen = HashSet::new();
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur.key()) {
                continue;
            }
            if self.nfa.has_take(cur.node) {
                let mut w = cur.clone();
                w.id = self.fresh_id();
                waiting.push(w);
            }
            if self.nfa.is_accept(cur.node) {
                accepted.push(cur.clone());
            }
            let nfa = Arc::clone(&self.nfa);
            for e in nfa.edges_from(cur.node).filter(|e| e.kind == TransitionKind::Proceed) {
                let mut next = cur.clone();
                next.node = e.to;
                if self.apply(&mut next, &e.actions) {
                    stack.push(next);
                }
            }
        }
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_instance += 1;
        self.next_instance
    }
}
