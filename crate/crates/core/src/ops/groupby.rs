use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::OpError;
use crate::backend::prompt::Prompt;
use crate::backend::{cosine, ModelBackend};
use crate::text::{dominant_token, first_sentence};
use crate::types::Document;

/// Exemplar texts kept per group for prompts.
pub const MAX_EXEMPLARS: usize = 3;
const EXEMPLAR_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupStrategy {
    /// The model assigns each document to a listed group or opens a new one.
    #[serde(alias = "m1")]
    M1,
    /// As `M1`, plus a merge/split refinement prompt every `refine_every`
    /// documents.
    #[serde(alias = "m2")]
    M2,
    /// Nearest centroid by cosine, new group below the threshold; the model
    /// only names new groups.
    #[serde(alias = "m3")]
    M3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    pub label: String,
    pub members: Vec<String>,
    /// Running mean of member embeddings; `M3` only.
    pub centroid: Option<Vec<f64>>,
    pub exemplars: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub groups: Vec<Group>,
    pub tuples_seen: u64,
    next_id: u64,
}

impl GroupState {
    pub fn group_of(&self, doc_id: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.members.iter().any(|m| m == doc_id))
    }

    pub fn members(&self) -> BTreeSet<String> {
        self.groups.iter().flat_map(|g| g.members.iter().cloned()).collect()
    }

    /// Groups are pairwise disjoint and cover exactly `processed`.
    pub fn is_partition_of(&self, processed: &[String]) -> bool {
        let mut seen = HashSet::new();
        for g in &self.groups {
            if g.members.is_empty() {
                return false;
            }
            for m in &g.members {
                if !seen.insert(m.as_str()) {
                    return false;
                }
            }
        }
        seen.len() == processed.len() && processed.iter().all(|p| seen.contains(p.as_str()))
    }

    /// The partition as lists of doc ids, in group order.
    pub fn partition(&self) -> Vec<Vec<String>> {
        self.groups.iter().map(|g| g.members.clone()).collect()
    }

    fn open(&mut self, label: String, doc: &Document, centroid: Option<Vec<f64>>) -> String {
        self.next_id += 1;
        let id = format!("g{}", self.next_id);
        self.groups.push(Group {
            group_id: id.clone(),
            label,
            members: vec![doc.doc_id.clone()],
            centroid,
            exemplars: vec![exemplar(&doc.text)],
        });
        id
    }

    fn listing(&self) -> String {
        self.groups
            .iter()
            .map(|g| format!("- {} [{}]: {}", g.group_id, g.label, g.exemplars.join(" | ")))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn exemplar(text: &str) -> String {
    first_sentence(text).chars().take(EXEMPLAR_CHARS).collect::<String>().replace('\n', " ")
}

fn join_member(g: &mut Group, doc: &Document) {
    g.members.push(doc.doc_id.clone());
    if g.exemplars.len() < MAX_EXEMPLARS {
        g.exemplars.push(exemplar(&doc.text));
    }
}

/// Places one document and returns its group id. Never refines; see
/// [`GroupBy`] for the cadence.
pub fn groupby_assign(
    doc: &Document,
    state: &mut GroupState,
    strategy: GroupStrategy,
    backend: &dyn ModelBackend,
    threshold: f64,
    instruction: &str,
) -> Result<String, OpError> {
    let id = match strategy {
        GroupStrategy::M1 | GroupStrategy::M2 => {
            let p = Prompt::new("groupby")
                .section(
                    "instruction",
                    format!("{instruction}\nAnswer `ASSIGN <group id>` or `NEW <label>`."),
                )
                .section("groups", state.listing())
                .section("document", &doc.text)
                .render();
            let reply = backend.complete(&p)?.text;
            let reply = reply.trim();
            let target = reply
                .strip_prefix("ASSIGN ")
                .map(str::trim)
                .and_then(|t| state.groups.iter().position(|g| g.group_id == t || g.label == t));
            match target {
                Some(i) => {
                    join_member(&mut state.groups[i], doc);
                    state.groups[i].group_id.clone()
                }
                None => {
                    let label = reply.strip_prefix("NEW ").map(str::trim).filter(|l| !l.is_empty());
                    let label = label.map(str::to_string).unwrap_or_else(|| "misc".into());
                    state.open(label, doc, None)
                }
            }
        }
        GroupStrategy::M3 => {
            let v = backend.embed(&doc.text)?.vector;
            let best = state
                .groups
                .iter()
                .enumerate()
                .filter_map(|(i, g)| g.centroid.as_ref().map(|c| (i, cosine(c, &v))))
                .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
                    Some((_, b)) if b >= s => acc,
                    _ => Some((i, s)),
                });
            match best {
                Some((i, s)) if s >= threshold => {
                    let g = &mut state.groups[i];
                    join_member(g, doc);
                    let n = g.members.len() as f64;
                    if let Some(c) = g.centroid.as_mut() {
                        for (x, y) in c.iter_mut().zip(&v) {
                            *x += (y - *x) / n;
                        }
                    }
                    g.group_id.clone()
                }
                _ => {
                    let p = Prompt::new("label")
                        .section("instruction", "Name the topic of this document in one word.")
                        .section("document", &doc.text)
                        .render();
                    let label = backend.complete(&p)?.text.trim().to_string();
                    let label = if label.is_empty() {
                        dominant_token(&doc.text).unwrap_or_else(|| "misc".into())
                    } else {
                        label
                    };
                    state.open(label, doc, Some(v))
                }
            }
        }
    };
    state.tuples_seen += 1;
    Ok(id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PlanStep {
    Merge { groups: Vec<String> },
    Split { group: String, docs: Vec<String> },
}

/// Parses `merge g1,g2` and `split g: d1,d2` lines. An empty reply or `NONE`
/// is the empty plan.
pub fn parse_plan(reply: &str) -> Result<Vec<PlanStep>, OpError> {
    let mut steps = Vec::new();
    for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line.eq_ignore_ascii_case("none") {
            continue;
        }
        let list = |s: &str| -> Vec<String> {
            s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect()
        };
        if let Some(rest) = line.strip_prefix("merge ") {
            let groups = list(rest);
            if groups.len() < 2 {
                return Err(OpError::PlanParse(format!("merge needs two groups: {line}")));
            }
            steps.push(PlanStep::Merge { groups });
        } else if let Some(rest) = line.strip_prefix("split ") {
            let (g, docs) = rest
                .split_once(':')
                .ok_or_else(|| OpError::PlanParse(format!("split needs `group: docs`: {line}")))?;
            let docs = list(docs);
            if docs.is_empty() {
                return Err(OpError::PlanParse(format!("split lists no documents: {line}")));
            }
            steps.push(PlanStep::Split {
                group: g.trim().to_string(),
                docs,
            });
        } else {
            return Err(OpError::PlanParse(format!("unknown plan step: {line}")));
        }
    }
    Ok(steps)
}

fn apply_plan(state: &GroupState, plan: &[PlanStep], texts: &dyn Fn(&str) -> Option<String>) -> Result<GroupState, OpError> {
    let mut next = state.clone();
    let mut touched = HashSet::new();
    let find = |s: &GroupState, id: &str| s.groups.iter().position(|g| g.group_id == id);
    for step in plan {
        match step {
            PlanStep::Merge { groups } => {
                for g in groups {
                    if find(&next, g).is_none() {
                        return Err(OpError::PlanParse(format!("unknown group {g}")));
                    }
                    if !touched.insert(g.clone()) {
                        return Err(OpError::PlanParse(format!("group {g} appears twice in the plan")));
                    }
                }
                for g in &groups[1..] {
                    let other = next.groups.remove(find(&next, g).unwrap());
                    let head = find(&next, &groups[0]).unwrap();
                    let h = &mut next.groups[head];
                    if let (Some(a), Some(b)) = (h.centroid.as_mut(), other.centroid.as_ref()) {
                        let (na, nb) = (h.members.len() as f64, other.members.len() as f64);
                        for (x, y) in a.iter_mut().zip(b) {
                            *x = (*x * na + y * nb) / (na + nb);
                        }
                    }
                    h.members.extend(other.members);
                    for e in other.exemplars {
                        if h.exemplars.len() < MAX_EXEMPLARS {
                            h.exemplars.push(e);
                        }
                    }
                }
            }
            PlanStep::Split { group, docs } => {
                let i = find(&next, group).ok_or_else(|| OpError::PlanParse(format!("unknown group {group}")))?;
                if !touched.insert(group.clone()) {
                    return Err(OpError::PlanParse(format!("group {group} appears twice in the plan")));
                }
                let g = &mut next.groups[i];
                for d in docs {
                    if !g.members.contains(d) {
                        return Err(OpError::PlanParse(format!("{d} is not in {group}")));
                    }
                }
                if docs.len() >= g.members.len() {
                    return Err(OpError::PlanParse(format!("split would empty {group}")));
                }
                g.members.retain(|m| !docs.contains(m));
                let label = format!("{}-split", g.label);
                let had_centroid = g.centroid.is_some();
                g.exemplars = g.members.iter().filter_map(|m| texts(m)).take(MAX_EXEMPLARS).map(|t| exemplar(&t)).collect();
                next.next_id += 1;
                let id = format!("g{}", next.next_id);
                next.groups.push(Group {
                    group_id: id,
                    label,
                    members: docs.clone(),
                    centroid: if had_centroid { state.groups[i].centroid.clone() } else { None },
                    exemplars: docs.iter().filter_map(|m| texts(m)).take(MAX_EXEMPLARS).map(|t| exemplar(&t)).collect(),
                });
            }
        }
    }
    Ok(next)
}

/// Asks the model for a merge/split plan over the current groups and applies
/// it atomically. A plan that fails to parse or references unknown groups or
/// documents leaves `state` untouched and is returned as an error.
pub fn groupby_refine(
    state: &mut GroupState,
    backend: &dyn ModelBackend,
    texts: &dyn Fn(&str) -> Option<String>,
) -> Result<Vec<PlanStep>, OpError> {
    let p = Prompt::new("refine")
        .section(
            "instruction",
            "Propose group merges (`merge g1,g2`) or splits (`split g: doc1,doc2`), one per line, or NONE.",
        )
        .section("groups", state.listing())
        .render();
    let reply = backend.complete(&p)?.text;
    let plan = parse_plan(&reply)?;
    let next = apply_plan(state, &plan, texts)?;
    *state = next;
    Ok(plan)
}

/// Stateful group-by operator with the refinement cadence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupBy {
    pub strategy: GroupStrategy,
    pub threshold: f64,
    pub refine_every: u64,
    pub instruction: String,
    pub state: GroupState,
    /// `tuples_seen` at each refinement attempt.
    pub refinements: Vec<u64>,
    /// Refinement plans that were rejected.
    pub rejected_plans: u64,
    #[serde(skip)]
    texts: std::collections::HashMap<String, String>,
}

impl GroupBy {
    pub fn new(strategy: GroupStrategy, threshold: f64, refine_every: u64) -> Self {
        GroupBy {
            strategy,
            threshold,
            refine_every: refine_every.max(1),
            instruction: "Group documents by topic.".into(),
            state: GroupState::default(),
            refinements: Vec::new(),
            rejected_plans: 0,
            texts: Default::default(),
        }
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = instruction.into();
        self
    }

    pub fn assign(&mut self, doc: &Document, backend: &dyn ModelBackend) -> Result<String, OpError> {
        self.texts.insert(doc.doc_id.clone(), doc.text.clone());
        groupby_assign(doc, &mut self.state, self.strategy, backend, self.threshold, &self.instruction)?;
        if self.strategy == GroupStrategy::M2 && self.state.tuples_seen.is_multiple_of(self.refine_every) {
            self.refinements.push(self.state.tuples_seen);
            let texts = &self.texts;
            match groupby_refine(&mut self.state, backend, &|id| texts.get(id).cloned()) {
                Ok(_) => {}
                Err(OpError::PlanParse(_)) => self.rejected_plans += 1,
                Err(e) => return Err(e),
            }
        }
        // refinement may have moved the document
        Ok(self
            .state
            .group_of(&doc.doc_id)
            .map(|g| g.group_id.clone())
            .expect("assigned document has a group"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, SimulatedLlm};

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, "e", 0, text)
    }

    #[test]
    fn m3_basics() {
        let mut s = GroupState::default();
        let b = SimulatedLlm;
        let g1 = groupby_assign(&doc("a", "renal dialysis"), &mut s, GroupStrategy::M3, &b, 0.5, "").unwrap();
        assert_eq!(g1, "g1");
        let before = s.groups[0].centroid.clone();
        let again = groupby_assign(&doc("b", "renal dialysis"), &mut s, GroupStrategy::M3, &b, 0.5, "").unwrap();
        assert_eq!(again, "g1");
        assert_eq!(s.groups[0].centroid, before);
        let g2 = groupby_assign(&doc("c", "alpha"), &mut s, GroupStrategy::M3, &b, 0.5, "").unwrap();
        assert_eq!(g2, "g2");
        assert!(s.is_partition_of(&["a".into(), "b".into(), "c".into()]));
        assert_eq!(s.tuples_seen, 3);
    }

    fn two_groups() -> GroupState {
        let mut s = GroupState::default();
        s.open("x".into(), &doc("a", "a"), None);
        s.open("y".into(), &doc("b", "b"), None);
        join_member(&mut s.groups[1], &doc("c", "c"));
        s
    }

    #[test]
    fn merge_plan_unions_members() {
        let mut s = two_groups();
        let b = ScriptedBackend::new(["merge g1,g2"]);
        groupby_refine(&mut s, &b, &|_| None).unwrap();
        assert_eq!(s.groups.len(), 1);
        assert_eq!(s.groups[0].members, vec!["a", "b", "c"]);
    }

    #[test]
    fn split_plan_moves_docs() {
        let mut s = two_groups();
        let b = ScriptedBackend::new(["split g2: c"]);
        groupby_refine(&mut s, &b, &|id| Some(id.to_string())).unwrap();
        assert_eq!(s.partition(), vec![vec!["a"], vec!["b"], vec!["c"]]);
        assert_eq!(s.groups[2].label, "y-split");
    }

    #[test]
    fn empty_plan_and_bad_plans_leave_state() {
        let s0 = two_groups();
        for reply in ["", "NONE"] {
            let mut s = s0.clone();
            groupby_refine(&mut s, &ScriptedBackend::new([reply]), &|_| None).unwrap();
            assert_eq!(s, s0);
        }
        for reply in ["merge g1,g9", "split g2: zz", "shuffle g1", "merge g1,g2\nsplit g2: c"] {
            let mut s = s0.clone();
            let err = groupby_refine(&mut s, &ScriptedBackend::new([reply]), &|_| None).unwrap_err();
            assert!(matches!(err, OpError::PlanParse(_)), "{reply}");
            assert_eq!(s, s0);
        }
    }

    #[test]
    fn m2_refines_every_ten() {
        let mut g = GroupBy::new(GroupStrategy::M2, 0.6, 10);
        for i in 0..35 {
            g.assign(&doc(&format!("d{i}"), &format!("topic{} words here", i % 3)), &SimulatedLlm)
                .unwrap();
        }
        assert_eq!(g.refinements, vec![10, 20, 30]);
    }

    #[test]
    fn exemplars_capped() {
        let mut s = GroupState::default();
        for i in 0..6 {
            groupby_assign(&doc(&format!("d{i}"), "same words"), &mut s, GroupStrategy::M3, &SimulatedLlm, 0.5, "")
                .unwrap();
        }
        assert_eq!(s.groups[0].exemplars.len(), MAX_EXEMPLARS);
    }
}
