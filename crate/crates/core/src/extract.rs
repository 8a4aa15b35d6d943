//! Turns documents into typed, timestamped events through a model backend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::prompt::Prompt;
use crate::backend::{BackendError, ModelBackend};
use crate::index::{Chunking, RetrievalIndex};
use crate::text::find_ci;
use crate::types::{Document, SemanticEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub event_type: String,
    pub extraction_prompt: String,
    #[serde(default)]
    pub attrs_schema: Vec<String>,
    /// Trigger phrases; the simulated model matches them case-insensitively.
    #[serde(default)]
    pub keywords: Vec<String>,
}

impl EventTypeDef {
    pub fn new(event_type: impl Into<String>, prompt: impl Into<String>, keywords: &[&str]) -> Self {
        EventTypeDef {
            event_type: event_type.into(),
            extraction_prompt: prompt.into(),
            attrs_schema: Vec::new(),
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSchema {
    pub types: Vec<EventTypeDef>,
}

impl EventSchema {
    pub fn new(types: Vec<EventTypeDef>) -> Self {
        EventSchema { types }
    }

    pub fn check(&self) -> Result<(), ExtractError> {
        if self.types.is_empty() {
            return Err(ExtractError::Schema("schema has no event types".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.types {
            if t.event_type.trim().is_empty() {
                return Err(ExtractError::Schema("event type name is empty".into()));
            }
            if t.extraction_prompt.trim().is_empty() {
                return Err(ExtractError::Schema(format!("{} has an empty prompt", t.event_type)));
            }
            if !seen.insert(&t.event_type) {
                return Err(ExtractError::Schema(format!("{} is defined twice", t.event_type)));
            }
        }
        Ok(())
    }

    fn get(&self, name: &str) -> Option<&EventTypeDef> {
        self.types.iter().find(|t| t.event_type == name)
    }

    /// One `- Type: prompt` line per type, as shown to the model.
    pub fn listing(&self) -> String {
        self.types
            .iter()
            .map(|t| {
                let mut line = format!("- {}: {}", t.event_type, t.extraction_prompt);
                if !t.attrs_schema.is_empty() {
                    line.push_str(&format!(" (attrs: {})", t.attrs_schema.join(", ")));
                }
                if !t.keywords.is_empty() {
                    line.push_str(&format!(" [keywords: {}]", t.keywords.join("; ")));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("document {doc_id}: unparseable extractor output: {message}")]
    Parse { doc_id: String, message: String },
    #[error("invalid event schema: {0}")]
    Schema(String),
}

const OUTPUT_CONTRACT: &str = "Return only a JSON array. Each element is an object \
{\"event_type\", \"attrs\", \"evidence_quote\"}; evidence_quote is copied verbatim from the \
document. Report each event type at most once.";

pub fn extraction_prompt(schema: &EventSchema, text: &str) -> String {
    Prompt::new("extract")
        .section("instruction", OUTPUT_CONTRACT)
        .section("event types", schema.listing())
        .section("document", text)
        .render()
}

fn repair_prompt(schema: &EventSchema, text: &str, reply: &str, error: &str) -> String {
    Prompt::new("extract")
        .section("instruction", OUTPUT_CONTRACT)
        .section("event types", schema.listing())
        .section("document", text)
        .section("previous reply", reply)
        .section("error", error)
        .render()
}

/// Sends the whole document in one call.
pub fn extract_events(
    doc: &Document,
    schema: &EventSchema,
    backend: &dyn ModelBackend,
) -> Result<Vec<SemanticEvent>, ExtractError> {
    schema.check()?;
    run(doc, schema, backend, &doc.text)
}

/// Like [`extract_events`], but the prompt carries only the passages of the
/// document most similar to each event type: the union of the top `k`
/// chunks per type, widened to word boundaries.
pub fn extract_events_rag(
    doc: &Document,
    schema: &EventSchema,
    backend: &dyn ModelBackend,
    k: usize,
    chunking: Chunking,
) -> Result<Vec<SemanticEvent>, ExtractError> {
    schema.check()?;
    if doc.text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut index = RetrievalIndex::new(chunking);
    index.add(doc, backend).map_err(|e| match e {
        crate::index::IndexError::Backend(b) => ExtractError::Backend(b),
        other => ExtractError::Schema(other.to_string()),
    })?;
    let mut spans = Vec::new();
    for t in &schema.types {
        let query = format!("{} {} {}", t.event_type, t.extraction_prompt, t.keywords.join(" "));
        for (chunk, _) in index.top_k(backend, &query, k.max(1))? {
            spans.push(chunk.span);
        }
    }
    let excerpt = excerpt(&doc.text, spans);
    run(doc, schema, backend, &excerpt)
}

/// Joins the given char ranges of `text`, each widened to whole words and
/// overlapping ranges merged. Covering the whole text returns it unchanged.
pub(crate) fn excerpt(text: &str, mut spans: Vec<(usize, usize)>) -> String {
    let chars: Vec<char> = text.chars().collect();
    for (s, e) in spans.iter_mut() {
        while *s > 0 && !chars[*s - 1].is_whitespace() {
            *s -= 1;
        }
        while *e < chars.len() && !chars[*e].is_whitespace() {
            *e += 1;
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
        .iter()
        .map(|&(s, e)| chars[s..e].iter().collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

fn run(
    doc: &Document,
    schema: &EventSchema,
    backend: &dyn ModelBackend,
    text: &str,
) -> Result<Vec<SemanticEvent>, ExtractError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let reply = backend.complete(&extraction_prompt(schema, text))?.text;
    match parse_reply(doc, schema, &reply) {
        Ok(events) => Ok(events),
        Err(first) => {
            let retry = backend.complete(&repair_prompt(schema, text, &reply, &first))?.text;
            parse_reply(doc, schema, &retry).map_err(|message| ExtractError::Parse {
                doc_id: doc.doc_id.clone(),
                message,
            })
        }
    }
}

fn value_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_reply(doc: &Document, schema: &EventSchema, reply: &str) -> Result<Vec<SemanticEvent>, String> {
    let (start, end) = match (reply.find('['), reply.rfind(']')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err("no JSON array in reply".into()),
    };
    let items: Vec<Value> = serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            return Err(format!("element {i} is not an object"));
        };
        let Some(ty) = obj.get("event_type").and_then(Value::as_str) else {
            return Err(format!("element {i} has no event_type"));
        };
        // types outside the schema are dropped, not fatal
        let Some(def) = schema.get(ty) else { continue };
        let attrs: BTreeMap<String, String> = obj
            .get("attrs")
            .and_then(Value::as_object)
            .map(|m| m.iter().map(|(k, v)| (k.clone(), value_to_string(v))).collect())
            .unwrap_or_default();
        let quote = obj.get("evidence_quote").and_then(Value::as_str).unwrap_or("");
        let span = find_ci(&doc.text, quote);
        let timestamp = attrs
            .get("timestamp")
            .and_then(|t| t.trim().parse::<i64>().ok())
            .filter(|t| *t >= 0)
            .unwrap_or(doc.timestamp);
        let description = obj
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or(if quote.is_empty() { &def.extraction_prompt } else { quote })
            .to_string();
        out.push((
            i,
            SemanticEvent {
                event_id: format!("{}:{}:{i}", doc.doc_id, def.event_type),
                entity_id: doc.entity_id.clone(),
                event_type: def.event_type.clone(),
                timestamp,
                description,
                attrs,
                source_doc: doc.doc_id.clone(),
                evidence_span: span,
            },
        ));
    }
    out.sort_by_key(|(i, e)| (e.timestamp, e.evidence_span.map_or(usize::MAX, |s| s.0), *i));
    Ok(out.into_iter().map(|(_, e)| e).collect())
}
