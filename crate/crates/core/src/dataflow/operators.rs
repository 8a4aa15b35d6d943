//! The operator kinds a spec may name, and how their params are read.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use super::{OperatorSpec, SpecIssue};
use crate::backend::ModelBackend;
use crate::extract::{extract_events, extract_events_rag, EventSchema, ExtractError};
use crate::index::Chunking;
use crate::nfa::{compile, MatchError, MatcherConfig, MatcherState, DEFAULT_INSTANCE_CAP};
use crate::ops::{
    sem_aggregate, sem_filter, sem_join, sem_map, ContRag, Decision, GroupBy, GroupStrategy, OpError,
    SemWindow, WindowStrategy, DEFAULT_THRESHOLD,
};
use crate::pattern::{parse_pattern, validate_pattern};
use crate::text::find_ci;
use crate::types::{Document, Record, SemanticEvent};

pub const KINDS: &[&str] = &[
    "filter",
    "sem_filter",
    "sem_map",
    "sem_aggregate",
    "sem_join",
    "sem_groupby",
    "sem_window",
    "cont_rag",
    "extract",
    "pattern",
    "sem_pattern",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{kind} cannot consume {got} records")]
    InputKind { kind: &'static str, got: &'static str },
}

impl OperatorError {
    pub fn code(&self) -> &'static str {
        match self {
            OperatorError::Op(OpError::Backend(_)) | OperatorError::Extract(ExtractError::Backend(_)) => {
                "BackendError"
            }
            OperatorError::Op(_) => "OperatorError",
            OperatorError::Extract(_) => "ExtractionError",
            OperatorError::Match(MatchError::OutOfOrder { .. }) => "OutOfOrderError",
            OperatorError::Match(_) => "InstanceCapExceeded",
            OperatorError::InputKind { .. } => "InputKindError",
        }
    }
}

fn record_kind(r: &Record) -> &'static str {
    match r {
        Record::Document(_) => "document",
        Record::Event(_) => "event",
        Record::Match(_) => "match",
    }
}

fn expect_doc(kind: &'static str, r: Record) -> Result<Document, OperatorError> {
    match r {
        Record::Document(d) => Ok(d),
        other => Err(OperatorError::InputKind {
            kind,
            got: record_kind(&other),
        }),
    }
}

pub(crate) trait Operator: Send {
    fn process(
        &mut self,
        port: usize,
        rec: Record,
        backend: &dyn ModelBackend,
    ) -> Result<Vec<Record>, OperatorError>;

    /// The watermark of `entity` moved to `ts`.
    fn watermark(&mut self, _entity: &str, _ts: i64) -> Vec<Record> {
        Vec::new()
    }

    /// End of stream.
    fn flush(&mut self, _backend: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        Ok(Vec::new())
    }

    /// Inspectable operator state for traces.
    fn state(&self) -> Value {
        Value::Null
    }

    /// Events this operator extracted or consumed.
    fn events(&self) -> &[SemanticEvent] {
        &[]
    }
}

/// Reads params, collecting every problem instead of stopping at the first.
struct Params<'a> {
    op: &'a OperatorSpec,
    issues: Vec<SpecIssue>,
}

impl<'a> Params<'a> {
    fn new(op: &'a OperatorSpec) -> Self {
        Params { op, issues: Vec::new() }
    }

    fn bad(&mut self, message: String) {
        self.issues.push(SpecIssue::new("InvalidParam", Some(&self.op.id), message));
    }

    fn opt_str(&mut self, key: &str) -> Option<String> {
        match self.op.params.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                self.bad(format!("{key} must be a string, got {other}"));
                None
            }
        }
    }

    fn str_or(&mut self, key: &str, default: &str) -> String {
        self.opt_str(key).unwrap_or_else(|| default.to_string())
    }

    fn required_str(&mut self, key: &str) -> String {
        match self.opt_str(key) {
            Some(s) if !s.trim().is_empty() => s,
            Some(_) => {
                self.bad(format!("{key} is empty"));
                String::new()
            }
            None if self.op.params.contains_key(key) => String::new(),
            None => {
                self.bad(format!("{key} is required"));
                String::new()
            }
        }
    }

    fn threshold(&mut self) -> f64 {
        match self.op.params.get("threshold") {
            None | Some(Value::Null) => DEFAULT_THRESHOLD,
            Some(v) => match v.as_f64() {
                Some(t) if (-1.0..=1.0).contains(&t) => t,
                _ => {
                    self.bad(format!("threshold must be a number in [-1, 1], got {v}"));
                    DEFAULT_THRESHOLD
                }
            },
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        match self.op.params.get(key) {
            None | Some(Value::Null) => default,
            Some(v) => match v.as_u64() {
                Some(n) if n as usize >= min => n as usize,
                _ => {
                    self.bad(format!("{key} must be an integer >= {min}, got {v}"));
                    default
                }
            },
        }
    }

    fn opt_count(&mut self, key: &str, min: usize) -> Option<usize> {
        self.op.params.get(key).filter(|v| !v.is_null())?;
        Some(self.count(key, min, min))
    }

    fn enum_param<T: serde::de::DeserializeOwned>(&mut self, key: &str, default: T) -> T {
        match self.op.params.get(key) {
            None | Some(Value::Null) => default,
            Some(v) => match serde_json::from_value(v.clone()) {
                Ok(t) => t,
                Err(_) => {
                    self.bad(format!("unknown {key} {v}"));
                    default
                }
            },
        }
    }

    fn chunking(&mut self) -> Chunking {
        let d = Chunking::default();
        let size = self.count("chunk_size", d.size, 1);
        let overlap = self.count("chunk_overlap", d.overlap.min(size - 1), 0);
        if overlap >= size {
            self.bad(format!("chunk_overlap {overlap} must be smaller than chunk_size {size}"));
            return d;
        }
        Chunking { size, overlap }
    }

    fn finish<T>(self, value: T) -> Result<T, Vec<SpecIssue>> {
        if self.issues.is_empty() {
            Ok(value)
        } else {
            Err(self.issues)
        }
    }
}

pub(crate) fn check_params(op: &OperatorSpec) -> Result<(), Vec<SpecIssue>> {
    build(op).map(|_| ())
}

pub(crate) fn build(op: &OperatorSpec) -> Result<Box<dyn Operator>, Vec<SpecIssue>> {
    let mut p = Params::new(op);
    match op.kind.as_str() {
        "filter" => {
            let contains = p.opt_str("contains");
            let event_types = match op.params.get("event_type") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(vec![s.clone()]),
                Some(v) => match serde_json::from_value::<Vec<String>>(v.clone()) {
                    Ok(v) => Some(v),
                    Err(_) => {
                        p.bad("event_type must be a string or a list of strings".into());
                        None
                    }
                },
            };
            let attr = p.opt_str("attr");
            let equals = p.opt_str("equals");
            let attr = match (attr, equals) {
                (Some(k), Some(v)) => Some((k, v)),
                (None, None) => None,
                _ => {
                    p.bad("attr and equals must be given together".into());
                    None
                }
            };
            if contains.is_none() && event_types.is_none() && attr.is_none() && p.issues.is_empty() {
                p.bad("filter needs contains, event_type or attr/equals".into());
            }
            p.finish(Box::new(Filter {
                contains,
                event_types,
                attr,
            }) as Box<dyn Operator>)
        }
        "sem_filter" => {
            let prompt = p.required_str("prompt");
            let decision = p.enum_param("strategy", Decision::Llm);
            let threshold = p.threshold();
            p.finish(Box::new(SemFilter {
                prompt,
                decision,
                threshold,
            }) as Box<dyn Operator>)
        }
        "sem_map" => {
            let prompt = p.required_str("prompt");
            p.finish(Box::new(SemMap { prompt }) as Box<dyn Operator>)
        }
        "sem_aggregate" => {
            let prompt = p.required_str("prompt");
            let size = p.count("size", 5, 1);
            p.finish(Box::new(SemAggregate {
                prompt,
                size,
                buffer: Vec::new(),
            }) as Box<dyn Operator>)
        }
        "sem_join" => {
            let prompt = p.str_or("prompt", "Are these two documents about the same thing?");
            let decision = p.enum_param("strategy", Decision::Embedding);
            let threshold = p.threshold();
            let window_s = p.count("window_s", 86_400, 0) as i64;
            p.finish(Box::new(SemJoin {
                prompt,
                decision,
                threshold,
                window_s,
                buffers: [Vec::new(), Vec::new()],
                horizon: i64::MIN,
            }) as Box<dyn Operator>)
        }
        "sem_groupby" => {
            let strategy = p.enum_param("strategy", GroupStrategy::M3);
            let threshold = p.threshold();
            let refine_every = p.count("refine_every", 10, 1) as u64;
            let mut g = GroupBy::new(strategy, threshold, refine_every);
            if let Some(prompt) = p.opt_str("prompt") {
                g = g.with_instruction(prompt);
            }
            p.finish(Box::new(SemGroupBy { inner: g }) as Box<dyn Operator>)
        }
        "sem_window" => {
            let strategy = p.enum_param("strategy", WindowStrategy::Pairwise);
            let threshold = p.threshold();
            p.finish(Box::new(Window {
                inner: SemWindow::new(strategy, threshold),
                closed: BTreeMap::new(),
            }) as Box<dyn Operator>)
        }
        "cont_rag" => {
            let prompt = p.required_str("prompt");
            let k = p.count("k", 3, 1);
            let chunking = p.chunking();
            p.finish(Box::new(Rag {
                inner: ContRag::new(k, prompt, chunking),
            }) as Box<dyn Operator>)
        }
        "extract" => {
            let ex = extractor(&mut p);
            p.finish(Box::new(ex) as Box<dyn Operator>)
        }
        "pattern" => {
            let pat = pattern_op(&mut p);
            p.finish(pat).map(|pat| Box::new(pat.expect("no issues")) as Box<dyn Operator>)
        }
        "sem_pattern" => {
            let extract = extractor(&mut p);
            let pattern = pattern_op(&mut p);
            p.finish(pattern).map(|pattern| {
                Box::new(SemPattern {
                    extract,
                    pattern: pattern.expect("no issues"),
                }) as Box<dyn Operator>
            })
        }
        other => Err(vec![SpecIssue::new(
            "UnknownOperatorKind",
            Some(&op.id),
            format!("unknown operator kind {other}"),
        )]),
    }
}

fn extractor(p: &mut Params<'_>) -> Extract {
    let schema = match p.op.params.get("schema") {
        None | Some(Value::Null) => {
            p.bad("schema is required".into());
            EventSchema::default()
        }
        Some(v) => match serde_json::from_value::<EventSchema>(v.clone()) {
            Ok(s) => {
                if let Err(e) = s.check() {
                    p.bad(e.to_string());
                }
                s
            }
            Err(e) => {
                p.bad(format!("schema does not parse: {e}"));
                EventSchema::default()
            }
        },
    };
    let rag_k = p.opt_count("rag_k", 1);
    let chunking = p.chunking();
    Extract {
        schema,
        rag_k,
        chunking,
        parse_failures: 0,
    }
}

/// Parses, validates and compiles the `pattern` param. A pattern that does
/// not compile is reported with the parser's or validator's own codes.
fn pattern_op(p: &mut Params<'_>) -> Option<PatternOp> {
    let text = p.required_str("pattern");
    let op_id = p.op.id.clone();
    let pattern_id = p.str_or("pattern_id", &op_id);
    let cap = p.count("instance_cap", DEFAULT_INSTANCE_CAP, 1);
    let oid = Some(op_id.as_str());
    if text.is_empty() {
        return None;
    }
    let expr = match parse_pattern(&text) {
        Ok(e) => e,
        Err(e) => {
            p.issues.push(SpecIssue::new(e.code(), oid, e.to_string()));
            return None;
        }
    };
    if let Err(vs) = validate_pattern(&expr) {
        p.issues
            .extend(vs.iter().map(|v| SpecIssue::new(v.kind.code(), oid, v.to_string())));
        return None;
    }
    let nfa = match compile(&expr) {
        Ok(n) => n,
        Err(e) => {
            p.issues.push(SpecIssue::new("CompileError", oid, e.to_string()));
            return None;
        }
    };
    Some(PatternOp {
        text,
        matcher: MatcherState::new(Arc::new(nfa), pattern_id, MatcherConfig { instance_cap: cap }),
        consumed: Vec::new(),
    })
}

struct Filter {
    contains: Option<String>,
    event_types: Option<Vec<String>>,
    attr: Option<(String, String)>,
}

impl Filter {
    fn keep(&self, r: &Record) -> bool {
        let (text, types, attrs): (Vec<&str>, Vec<&str>, Vec<&BTreeMap<String, String>>) = match r {
            Record::Document(d) => (vec![&d.text], vec![], vec![&d.attrs]),
            Record::Event(e) => (vec![&e.description], vec![&e.event_type], vec![&e.attrs]),
            Record::Match(m) => (
                m.events.iter().map(|e| e.description.as_str()).collect(),
                m.events.iter().map(|e| e.event_type.as_str()).collect(),
                m.events.iter().map(|e| &e.attrs).collect(),
            ),
        };
        if let Some(c) = &self.contains {
            if !text.iter().any(|t| find_ci(t, c).is_some()) {
                return false;
            }
        }
        if let Some(want) = &self.event_types {
            if !types.iter().any(|t| want.iter().any(|w| w == t)) {
                return false;
            }
        }
        if let Some((k, v)) = &self.attr {
            if !attrs.iter().any(|a| a.get(k) == Some(v)) {
                return false;
            }
        }
        true
    }
}

impl Operator for Filter {
    fn process(&mut self, _: usize, rec: Record, _: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        Ok(if self.keep(&rec) { vec![rec] } else { Vec::new() })
    }
}

struct SemFilter {
    prompt: String,
    decision: Decision,
    threshold: f64,
}

impl Operator for SemFilter {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_filter", rec)?;
        let keep = sem_filter(&doc, &self.prompt, self.decision, self.threshold, b)?;
        Ok(if keep { vec![Record::Document(doc)] } else { Vec::new() })
    }
}

struct SemMap {
    prompt: String,
}

impl Operator for SemMap {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_map", rec)?;
        Ok(vec![Record::Document(sem_map(&doc, &self.prompt, b)?)])
    }
}

/// Tumbling count window.
struct SemAggregate {
    prompt: String,
    size: usize,
    buffer: Vec<Document>,
}

impl Operator for SemAggregate {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        self.buffer.push(expect_doc("sem_aggregate", rec)?);
        if self.buffer.len() < self.size {
            return Ok(Vec::new());
        }
        let window = std::mem::take(&mut self.buffer);
        Ok(vec![Record::Document(sem_aggregate(&window, &self.prompt, b)?)])
    }

    fn flush(&mut self, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        if self.buffer.is_empty() {
            return Ok(Vec::new());
        }
        let window = std::mem::take(&mut self.buffer);
        Ok(vec![Record::Document(sem_aggregate(&window, &self.prompt, b)?)])
    }

    fn state(&self) -> Value {
        json!({ "buffered": self.buffer.iter().map(|d| &d.doc_id).collect::<Vec<_>>() })
    }
}

/// Symmetric windowed join: each side is matched against the other side's
/// documents no older than `window_s` before the newest timestamp seen.
struct SemJoin {
    prompt: String,
    decision: Decision,
    threshold: f64,
    window_s: i64,
    buffers: [Vec<Document>; 2],
    horizon: i64,
}

fn joined(l: &Document, r: &Document) -> Document {
    let entity = if l.entity_id == r.entity_id {
        l.entity_id.clone()
    } else {
        "mixed".to_string()
    };
    Document::new(
        format!("join:{}+{}", l.doc_id, r.doc_id),
        entity,
        l.timestamp.max(r.timestamp),
        format!("{}\n{}", l.text, r.text),
    )
    .with_attr("join.left", l.doc_id.clone())
    .with_attr("join.right", r.doc_id.clone())
}

impl Operator for SemJoin {
    fn process(&mut self, port: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_join", rec)?;
        self.horizon = self.horizon.max(doc.timestamp);
        let oldest = self.horizon.saturating_sub(self.window_s);
        for buf in &mut self.buffers {
            buf.retain(|d| d.timestamp >= oldest);
        }
        let side = port.min(1);
        let pairs = sem_join(&doc, &self.buffers[1 - side], &self.prompt, self.decision, self.threshold, b)?;
        let out = pairs
            .iter()
            .map(|(a, other)| {
                if side == 0 {
                    Record::Document(joined(a, other))
                } else {
                    Record::Document(joined(other, a))
                }
            })
            .collect();
        self.buffers[side].push(doc);
        Ok(out)
    }

    fn state(&self) -> Value {
        let ids = |i: usize| self.buffers[i].iter().map(|d| d.doc_id.clone()).collect::<Vec<_>>();
        json!({ "left": ids(0), "right": ids(1) })
    }
}

struct SemGroupBy {
    inner: GroupBy,
}

impl Operator for SemGroupBy {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_groupby", rec)?;
        let gid = self.inner.assign(&doc, b)?;
        let label = self
            .inner
            .state
            .groups
            .iter()
            .find(|g| g.group_id == gid)
            .map(|g| g.label.clone())
            .unwrap_or_default();
        Ok(vec![Record::Document(
            doc.with_attr("group_id", gid).with_attr("group_label", label),
        )])
    }

    fn state(&self) -> Value {
        serde_json::to_value(&self.inner).unwrap_or(Value::Null)
    }
}

struct Window {
    inner: SemWindow,
    closed: BTreeMap<String, usize>,
}

impl Window {
    fn emit(&mut self, docs: Vec<Document>) -> Record {
        let first = &docs[0];
        let last = &docs[docs.len() - 1];
        let n = self.closed.entry(first.entity_id.clone()).or_default();
        *n += 1;
        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        let text: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        Record::Document(
            Document::new(
                format!("win:{}:{}", first.entity_id, n),
                first.entity_id.clone(),
                last.timestamp,
                text.join("\n"),
            )
            .with_attr("window.docs", ids.join(","))
            .with_attr("window.start", first.timestamp.to_string()),
        )
    }
}

impl Operator for Window {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_window", rec)?;
        Ok(match self.inner.push(&doc, b)? {
            Some(w) if !w.is_empty() => vec![self.emit(w)],
            _ => Vec::new(),
        })
    }

    fn flush(&mut self, _: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let open = self.inner.close_all();
        Ok(open.into_iter().map(|w| self.emit(w)).collect())
    }

    fn state(&self) -> Value {
        let open: BTreeMap<&String, Vec<&String>> = self
            .inner
            .states
            .iter()
            .map(|(e, s)| (e, s.open_window.iter().map(|d| &d.doc_id).collect()))
            .collect();
        json!({ "open": open, "closed": self.closed })
    }
}

struct Rag {
    inner: ContRag,
}

impl Operator for Rag {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("cont_rag", rec)?;
        Ok(vec![Record::Document(self.inner.push(&doc, b)?)])
    }

    fn state(&self) -> Value {
        json!({ "indexed_chunks": self.inner.index.len() })
    }
}

struct Extract {
    schema: EventSchema,
    rag_k: Option<usize>,
    chunking: Chunking,
    parse_failures: u64,
}

impl Extract {
    fn run(&mut self, doc: &Document, b: &dyn ModelBackend) -> Result<Vec<SemanticEvent>, OperatorError> {
        let res = match self.rag_k {
            Some(k) => extract_events_rag(doc, &self.schema, b, k, self.chunking),
            None => extract_events(doc, &self.schema, b),
        };
        match res {
            Ok(evs) => Ok(evs),
            // one unreadable reply loses that document's events, not the run
            Err(ExtractError::Parse { .. }) => {
                self.parse_failures += 1;
                Ok(Vec::new())
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Operator for Extract {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("extract", rec)?;
        Ok(self.run(&doc, b)?.into_iter().map(Record::Event).collect())
    }

    fn state(&self) -> Value {
        json!({ "parse_failures": self.parse_failures, "rag_k": self.rag_k })
    }
}

struct PatternOp {
    text: String,
    matcher: MatcherState,
    consumed: Vec<SemanticEvent>,
}

impl PatternOp {
    fn take(&mut self, ev: SemanticEvent) -> Result<Vec<Record>, OperatorError> {
        let out = self.matcher.advance(&ev)?;
        self.consumed.push(ev);
        Ok(out.into_iter().map(Record::Match).collect())
    }
}

impl Operator for PatternOp {
    fn process(&mut self, _: usize, rec: Record, _: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        match rec {
            Record::Event(ev) => self.take(ev),
            other => Err(OperatorError::InputKind {
                kind: "pattern",
                got: record_kind(&other),
            }),
        }
    }

    fn watermark(&mut self, entity: &str, ts: i64) -> Vec<Record> {
        self.matcher.on_watermark(entity, ts).into_iter().map(Record::Match).collect()
    }

    fn flush(&mut self, _: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        Ok(self.matcher.flush().into_iter().map(Record::Match).collect())
    }

    fn state(&self) -> Value {
        json!({ "pattern": self.text, "matcher": self.matcher.snapshot() })
    }

    fn events(&self) -> &[SemanticEvent] {
        &self.consumed
    }
}

/// Extraction and matching fused into one operator.
struct SemPattern {
    extract: Extract,
    pattern: PatternOp,
}

impl Operator for SemPattern {
    fn process(&mut self, _: usize, rec: Record, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        let doc = expect_doc("sem_pattern", rec)?;
        let mut out = Vec::new();
        for ev in self.extract.run(&doc, b)? {
            out.extend(self.pattern.take(ev)?);
        }
        Ok(out)
    }

    fn watermark(&mut self, entity: &str, ts: i64) -> Vec<Record> {
        self.pattern.watermark(entity, ts)
    }

    fn flush(&mut self, b: &dyn ModelBackend) -> Result<Vec<Record>, OperatorError> {
        self.pattern.flush(b)
    }

    fn state(&self) -> Value {
        let mut s = self.pattern.state();
        s["parse_failures"] = json!(self.extract.parse_failures);
        s
    }

    fn events(&self) -> &[SemanticEvent] {
        &self.pattern.consumed
    }
}
