//! Natural-language front end: drafts a pipeline spec from a task
//! description, critiques it structurally and asks the model to repair it.

mod template;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::prompt::Prompt;
use crate::backend::{BackendError, ModelBackend};
use crate::dataflow::{validate_spec, PipelineSpec, SpecIssue, KINDS};

pub use template::template_draft;

/// Structured feedback on a draft; codes are the spec validator's.
pub type Critique = SpecIssue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisOutcome {
    Spec(PipelineSpec),
    Clarification(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub outcome: SynthesisOutcome,
    pub rounds_used: usize,
    /// One list per rejected draft.
    pub critiques: Vec<Vec<Critique>>,
}

impl SynthesisResult {
    pub fn spec(&self) -> Option<&PipelineSpec> {
        match &self.outcome {
            SynthesisOutcome::Spec(s) => Some(s),
            SynthesisOutcome::Clarification(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NlError {
    #[error("task is empty")]
    EmptyTask,
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no valid spec after {} rounds", .critiques.len())]
    SynthesisFailed { critiques: Vec<Vec<Critique>> },
    #[error("{}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Critique>),
}

impl NlError {
    pub fn code(&self) -> &'static str {
        match self {
            NlError::EmptyTask | NlError::NoRounds => "UsageError",
            NlError::Backend(_) => "BackendError",
            NlError::SynthesisFailed { .. } => "SynthesisFailed",
            NlError::Invalid(_) => "InvalidSpec",
        }
    }
}

const DRAFT_INSTRUCTIONS: &str = "Write a pipeline spec as one JSON object with fields \
pipeline_id, source {id}, operators [{id, kind, params, inputs}] and sinks. Patterns use \
SEQ, AND, OR, NOT, TIMES, ONE_OR_MORE, OPTIONAL and WITHIN over event types; every NOT \
needs an enclosing WITHIN. If the task leaves something essential open, answer instead \
with {\"clarification\": \"<one question>\"}.";

fn draft_prompt(task: &str) -> String {
    Prompt::new("synthesize")
        .section("instruction", DRAFT_INSTRUCTIONS)
        .section("operator kinds", KINDS.join(", "))
        .section("request", task)
        .render()
}

fn repair_prompt(task: &str, draft: &str, critiques: &[Critique]) -> String {
    let lines: Vec<String> = critiques
        .iter()
        .map(|c| serde_json::to_string(c).expect("critique serializes"))
        .collect();
    Prompt::new("repair")
        .section("instruction", DRAFT_INSTRUCTIONS)
        .section("operator kinds", KINDS.join(", "))
        .section("request", task)
        .section("previous draft", draft)
        .section("critiques", lines.join("\n"))
        .render()
}

enum Draft {
    Spec(PipelineSpec),
    Clarification(String),
    Broken(Critique),
}

fn read_draft(reply: &str) -> Draft {
    let body = match (reply.find('{'), reply.rfind('}')) {
        (Some(s), Some(e)) if s < e => &reply[s..=e],
        _ => {
            return Draft::Broken(SpecIssue::new("SpecParseError", None, "reply contains no JSON object"))
        }
    };
    let v: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return Draft::Broken(SpecIssue::new("SpecParseError", None, e.to_string())),
    };
    if let Some(q) = v.get("clarification").and_then(Value::as_str) {
        return Draft::Clarification(q.to_string());
    }
    match serde_json::from_value(v) {
        Ok(spec) => Draft::Spec(spec),
        Err(e) => Draft::Broken(SpecIssue::new("SpecParseError", None, e.to_string())),
    }
}

/// Draft, critique, repair, at most `max_rounds` drafts in total.
pub fn synthesize(task: &str, backend: &dyn ModelBackend, max_rounds: usize) -> Result<SynthesisResult, NlError> {
    if task.trim().is_empty() {
        return Err(NlError::EmptyTask);
    }
    if max_rounds == 0 {
        return Err(NlError::NoRounds);
    }
    let mut history: Vec<Vec<Critique>> = Vec::new();
    let mut prompt = draft_prompt(task);
    for round in 1..=max_rounds {
        let reply = backend.complete(&prompt)?.text;
        let critiques = match read_draft(&reply) {
            Draft::Clarification(q) => {
                return Ok(SynthesisResult {
                    outcome: SynthesisOutcome::Clarification(q),
                    rounds_used: round,
                    critiques: history,
                })
            }
            Draft::Spec(spec) => {
                let issues = validate_spec(&spec);
                if issues.is_empty() {
                    return Ok(SynthesisResult {
                        outcome: SynthesisOutcome::Spec(spec),
                        rounds_used: round,
                        critiques: history,
                    });
                }
                issues
            }
            Draft::Broken(c) => vec![c],
        };
        prompt = repair_prompt(task, &reply, &critiques);
        history.push(critiques);
    }
    Err(NlError::SynthesisFailed { critiques: history })
}

/// One parameter change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEdit {
    pub operator_id: String,
    pub param_key: String,
    pub value: Value,
}

impl ParamEdit {
    pub fn new(operator_id: impl Into<String>, param_key: impl Into<String>, value: impl Into<Value>) -> Self {
        ParamEdit {
            operator_id: operator_id.into(),
            param_key: param_key.into(),
            value: value.into(),
        }
    }
}

/// Applies `edits` in order and revalidates the whole spec. A `null` value
/// removes the param.
pub fn recompile(spec: &PipelineSpec, edits: &[ParamEdit]) -> Result<PipelineSpec, NlError> {
    let mut out = spec.clone();
    let mut issues = Vec::new();
    for e in edits {
        match out.get_mut(&e.operator_id) {
            Some(op) if e.value.is_null() => {
                op.params.remove(&e.param_key);
            }
            Some(op) => {
                op.params.insert(e.param_key.clone(), e.value.clone());
            }
            None => issues.push(SpecIssue::new(
                "UnknownOperator",
                Some(&e.operator_id),
                format!("no operator {} to edit", e.operator_id),
            )),
        }
    }
    issues.extend(validate_spec(&out));
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(NlError::Invalid(issues))
    }
}
