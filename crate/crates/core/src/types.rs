//! Records that flow through operator graphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A raw stream record: one free-text document about one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// Partition key. Ordering is only enforced within one entity.
    pub entity_id: String,
    /// Event time in epoch seconds.
    pub timestamp: i64,
    pub text: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        entity_id: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
    ) -> Self {
        Document {
            doc_id: doc_id.into(),
            entity_id: entity_id.into(),
            timestamp,
            text: text.into(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    /// Checks the per-record invariants (non-empty ids, non-negative time).
    pub fn check(&self) -> Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("doc_id must be non-empty".into());
        }
        if self.entity_id.is_empty() {
            return Err(format!("document {}: entity_id must be non-empty", self.doc_id));
        }
        if self.timestamp < 0 {
            return Err(format!("document {}: negative timestamp", self.doc_id));
        }
        Ok(())
    }
}

/// A typed, timestamped fact extracted from a document. The unit the
/// pattern matcher consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticEvent {
    pub event_id: String,
    pub entity_id: String,
    pub event_type: String,
    pub timestamp: i64,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub source_doc: String,
    /// Character offsets `[start, end)` into the source document text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_span: Option<(usize, usize)>,
}

impl SemanticEvent {
    pub fn new(
        event_id: impl Into<String>,
        entity_id: impl Into<String>,
        event_type: impl Into<String>,
        timestamp: i64,
    ) -> Self {
        SemanticEvent {
            event_id: event_id.into(),
            entity_id: entity_id.into(),
            event_type: event_type.into(),
            timestamp,
            description: String::new(),
            attrs: BTreeMap::new(),
            source_doc: String::new(),
            evidence_span: None,
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }
}

/// A completed pattern match for one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub pattern_id: String,
    pub entity_id: String,
    /// Matched events in arrival order.
    pub events: Vec<SemanticEvent>,
    /// `(first_ts, last_effective_ts)`; the second component includes the
    /// deadline of any trailing absence the match had to survive.
    pub window: (i64, i64),
    /// Watermark at emission; `None` when emitted by the end-of-stream flush.
    pub emitted_at: Option<i64>,
}

impl PatternMatch {
    pub fn event_ids(&self) -> Vec<String> {
        self.events.iter().map(|e| e.event_id.clone()).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.events.iter().map(|e| e.timestamp).collect()
    }
}

/// Anything that can travel along a graph edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Document(Document),
    Event(SemanticEvent),
    Match(PatternMatch),
}

impl Record {
    pub fn entity_id(&self) -> &str {
        match self {
            Record::Document(d) => &d.entity_id,
            Record::Event(e) => &e.entity_id,
            Record::Match(m) => &m.entity_id,
        }
    }

    pub fn timestamp(&self) -> i64 {
        match self {
            Record::Document(d) => d.timestamp,
            Record::Event(e) => e.timestamp,
            Record::Match(m) => m.window.1,
        }
    }

    pub fn as_document(&self) -> Option<&Document> {
        match self {
            Record::Document(d) => Some(d),
            _ => None,
        }
    }
}

/// Char-offset based slicing helpers shared by chunking and evidence spans.
pub(crate) fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let mut byte_start = text.len();
    let mut byte_end = text.len();
    for (n, b) in (&mut indices).enumerate() {
        if n == start {
            byte_start = b;
        }
        if n == end {
            byte_end = b;
            break;
        }
    }
    if byte_start > byte_end {
        return "";
    }
    &text[byte_start..byte_end]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_handles_multibyte() {
        let t = "héllo wörld";
        assert_eq!(char_slice(t, 0, 5), "héllo");
        assert_eq!(char_slice(t, 6, 11), "wörld");
        assert_eq!(char_slice(t, 6, 99), "wörld");
    }

    #[test]
    fn document_invariants() {
        assert!(Document::new("d", "e", 0, "x").check().is_ok());
        assert!(Document::new("d", "", 0, "x").check().is_err());
        assert!(Document::new("d", "e", -1, "x").check().is_err());
    }

    #[test]
    fn document_json_shape() {
        let d: Document = serde_json::from_str(
            r#"{"doc_id":"d1","entity_id":"p1","timestamp":5,"text":"hi","attrs":{"k":"v"}}"#,
        )
        .unwrap();
        assert_eq!(d.attrs["k"], "v");
        let back = serde_json::to_value(&d).unwrap();
        assert_eq!(back["timestamp"], 5);
    }
}
