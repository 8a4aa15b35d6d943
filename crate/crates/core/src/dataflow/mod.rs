//! Declarative operator graphs and their execution.
//!
//! A [`PipelineSpec`] names one source and a list of operators, each reading
//! from the source or from earlier operators. [`validate_spec`] reports every
//! structural problem at once; [`Pipeline::build`] refuses a spec with any.

mod operators;
mod pipeline;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use operators::{OperatorError, KINDS};
pub use pipeline::{OperatorTrace, Pipeline, PushError, SinkEmission};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub inputs: Vec<String>,
}

impl OperatorSpec {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, inputs: &[&str]) -> Self {
        OperatorSpec {
            id: id.into(),
            kind: kind.into(),
            params: Map::new(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub pipeline_id: String,
    pub source: SourceSpec,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
    pub sinks: Vec<String>,
}

impl PipelineSpec {
    pub fn new(pipeline_id: impl Into<String>, source_id: impl Into<String>) -> Self {
        PipelineSpec {
            pipeline_id: pipeline_id.into(),
            source: SourceSpec {
                id: source_id.into(),
                description: None,
            },
            operators: Vec::new(),
            sinks: Vec::new(),
        }
    }

    pub fn operator(mut self, op: OperatorSpec) -> Self {
        self.operators.push(op);
        self
    }

    pub fn sink(mut self, id: impl Into<String>) -> Self {
        self.sinks.push(id.into());
        self
    }

    pub fn get(&self, id: &str) -> Option<&OperatorSpec> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut OperatorSpec> {
        self.operators.iter_mut().find(|o| o.id == id)
    }
}

/// One structural problem with a spec. `code` is stable and machine-readable;
/// pattern problems reuse the pattern validator's codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecIssue {
    pub code: String,
    pub operator_id: Option<String>,
    pub message: String,
}

impl SpecIssue {
    pub fn new(code: impl Into<String>, operator_id: Option<&str>, message: impl Into<String>) -> Self {
        SpecIssue {
            code: code.into(),
            operator_id: operator_id.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.operator_id {
            Some(op) => write!(f, "{}: {} (operator {op})", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct BuildError {
    pub issues: Vec<SpecIssue>,
}

impl BuildError {
    /// Code of the first issue.
    pub fn code(&self) -> &str {
        self.issues.first().map_or("InvalidSpec", |i| i.code.as_str())
    }
}

/// Checks ids, kinds, references, acyclicity, sink reachability and every
/// operator's params. Returns all issues found; empty means buildable.
pub fn validate_spec(spec: &PipelineSpec) -> Vec<SpecIssue> {
    let mut issues = Vec::new();
    let src = spec.source.id.as_str();
    if src.trim().is_empty() {
        issues.push(SpecIssue::new("InvalidSource", None, "source id is empty"));
    }
    let mut ids: HashSet<&str> = HashSet::new();
    ids.insert(src);
    for op in &spec.operators {
        if op.id.trim().is_empty() {
            issues.push(SpecIssue::new("InvalidOperatorId", None, "operator id is empty"));
        } else if !ids.insert(&op.id) {
            issues.push(SpecIssue::new(
                "DuplicateOperator",
                Some(&op.id),
                format!("id {} is used more than once", op.id),
            ));
        }
    }
    for op in &spec.operators {
        let oid = Some(op.id.as_str());
        if !KINDS.contains(&op.kind.as_str()) {
            issues.push(SpecIssue::new(
                "UnknownOperatorKind",
                oid,
                format!("unknown operator kind {}", op.kind),
            ));
        }
        for input in &op.inputs {
            if !ids.contains(input.as_str()) {
                issues.push(SpecIssue::new(
                    "DanglingInput",
                    oid,
                    format!("input {input} is not defined"),
                ));
            }
        }
        let arity = if op.kind == "sem_join" { Some(2) } else { None };
        match arity {
            Some(n) if op.inputs.len() != n => issues.push(SpecIssue::new(
                "ArityError",
                oid,
                format!("{} takes exactly {n} inputs, got {}", op.kind, op.inputs.len()),
            )),
            None if op.inputs.is_empty() => {
                issues.push(SpecIssue::new("ArityError", oid, "operator has no inputs"))
            }
            _ => {}
        }
        if KINDS.contains(&op.kind.as_str()) {
            if let Err(mut errs) = operators::check_params(op) {
                issues.append(&mut errs);
            }
        }
    }
    if let Err(cycle) = topo_order(spec) {
        issues.push(SpecIssue::new(
            "CycleError",
            cycle.first().map(String::as_str),
            format!("operators form a cycle: {}", cycle.join(" -> ")),
        ));
    }
    if spec.sinks.is_empty() {
        issues.push(SpecIssue::new("NoSink", None, "pipeline declares no sinks"));
    }
    let reachable = reachable_from_source(spec);
    for sink in &spec.sinks {
        if !ids.contains(sink.as_str()) {
            issues.push(SpecIssue::new("UnknownSink", Some(sink), format!("sink {sink} is not defined")));
        } else if !reachable.contains(sink.as_str()) {
            issues.push(SpecIssue::new(
                "UnreachableSink",
                Some(sink),
                format!("sink {sink} is not reachable from source {src}"),
            ));
        }
    }
    issues
}

/// Operator indices in execution order: Kahn's algorithm, ties broken by
/// spec order. On a cycle, returns the ids left unordered.
pub(crate) fn topo_order(spec: &PipelineSpec) -> Result<Vec<usize>, Vec<String>> {
    let index: HashMap<&str, usize> = spec
        .operators
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();
    let n = spec.operators.len();
    let mut indegree = vec![0usize; n];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, op) in spec.operators.iter().enumerate() {
        for input in &op.inputs {
            if let Some(&j) = index.get(input.as_str()) {
                indegree[i] += 1;
                consumers[j].push(i);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| spec.operators[i].id.clone())
            .collect())
    }
}

fn reachable_from_source(spec: &PipelineSpec) -> HashSet<&str> {
    let mut consumers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for op in &spec.operators {
        for input in &op.inputs {
            consumers.entry(input.as_str()).or_default().push(&op.id);
        }
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let mut queue: VecDeque<&str> = VecDeque::from([spec.source.id.as_str()]);
    while let Some(id) = queue.pop_front() {
        if seen.insert(id) {
            queue.extend(consumers.get(id).into_iter().flatten().copied());
        }
    }
    seen
}
