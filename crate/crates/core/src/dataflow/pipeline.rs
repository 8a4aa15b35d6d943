use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::operators::{self, Operator, OperatorError};
use super::{topo_order, validate_spec, BuildError, OperatorSpec, PipelineSpec};
use crate::backend::{Meter, ModelBackend, Transcript};
use crate::metrics::{MetricDelta, RunMetrics, RunReport};
use crate::types::{Document, PatternMatch, Record, SemanticEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PushError {
    #[error("document {doc_id}: {message}")]
    InvalidDocument { doc_id: String, message: String },
    #[error("document {0} was already ingested")]
    DuplicateDocument(String),
    #[error("entity {entity_id}: timestamp {timestamp} is older than watermark {watermark}")]
    OutOfOrder {
        entity_id: String,
        timestamp: i64,
        watermark: i64,
    },
    #[error("operator {operator_id} failed: {source}")]
    OperatorFailure {
        operator_id: String,
        #[source]
        source: OperatorError,
    },
    #[error("pipeline was flushed and accepts no more documents")]
    Terminated,
}

impl PushError {
    pub fn code(&self) -> &'static str {
        match self {
            PushError::InvalidDocument { .. } => "InvalidDocument",
            PushError::DuplicateDocument(_) => "DuplicateDocument",
            PushError::OutOfOrder { .. } => "OutOfOrderError",
            PushError::OperatorFailure { .. } => "OperatorFailure",
            PushError::Terminated => "PipelineTerminated",
        }
    }
}

/// A record arriving at one of the declared sinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkEmission {
    pub sink: String,
    pub record: Record,
}

/// Everything an operator has emitted so far, plus its current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTrace {
    pub operator_id: String,
    pub kind: String,
    pub rows_in: u64,
    pub rows_out: u64,
    pub rows: Vec<Record>,
    /// Events the operator consumed or extracted internally, when it has any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<SemanticEvent>,
    pub state: Value,
}

struct Node {
    spec: OperatorSpec,
    op: Box<dyn Operator>,
    meter: Meter,
    rows_in: u64,
    rows: Vec<Record>,
}

/// An executable operator graph for a single run.
pub struct Pipeline {
    spec: PipelineSpec,
    run_id: String,
    nodes: Vec<Node>,
    transcript: Transcript,
    metrics: RunMetrics,
    watermarks: HashMap<String, i64>,
    seen: HashSet<String>,
    emissions: Vec<SinkEmission>,
    flushed: bool,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("pipeline_id", &self.spec.pipeline_id)
            .field("run_id", &self.run_id)
            .field("order", &self.order())
            .field("flushed", &self.flushed)
            .finish()
    }
}

impl Pipeline {
    pub fn build(spec: PipelineSpec, backend: Arc<dyn ModelBackend>) -> Result<Self, BuildError> {
        Self::with_transcript(spec, backend, Transcript::new())
    }

    /// Builds with every model call recorded into `transcript`.
    pub fn with_transcript(
        spec: PipelineSpec,
        backend: Arc<dyn ModelBackend>,
        transcript: Transcript,
    ) -> Result<Self, BuildError> {
        let issues = validate_spec(&spec);
        if !issues.is_empty() {
            return Err(BuildError { issues });
        }
        let order = topo_order(&spec).expect("validated spec is acyclic");
        let mut nodes = Vec::with_capacity(order.len());
        for i in order {
            let os = spec.operators[i].clone();
            let op = operators::build(&os).map_err(|issues| BuildError { issues })?;
            nodes.push(Node {
                meter: Meter::new(backend.clone(), transcript.clone(), os.id.clone()),
                spec: os,
                op,
                rows_in: 0,
                rows: Vec::new(),
            });
        }
        let ids: Vec<(&str, &str)> = std::iter::once((spec.source.id.as_str(), "source"))
            .chain(nodes.iter().map(|n| (n.spec.id.as_str(), n.spec.kind.as_str())))
            .collect();
        let metrics = RunMetrics::new(&spec.pipeline_id, &spec.pipeline_id, ids);
        Ok(Pipeline {
            run_id: spec.pipeline_id.clone(),
            spec,
            nodes,
            transcript,
            metrics,
            watermarks: HashMap::new(),
            seen: HashSet::new(),
            emissions: Vec::new(),
            flushed: false,
        })
    }

    pub fn set_run_id(&mut self, run_id: impl Into<String>) {
        self.run_id = run_id.into();
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Operator ids in execution order.
    pub fn order(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.spec.id.as_str()).collect()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn is_flushed(&self) -> bool {
        self.flushed
    }

    pub fn watermark(&self, entity_id: &str) -> Option<i64> {
        self.watermarks.get(entity_id).copied()
    }

    /// Sends one document through the graph and returns what reached the sinks.
    pub fn push(&mut self, doc: Document) -> Result<Vec<SinkEmission>, PushError> {
        if self.flushed {
            return Err(PushError::Terminated);
        }
        doc.check().map_err(|message| PushError::InvalidDocument {
            doc_id: doc.doc_id.clone(),
            message,
        })?;
        if self.seen.contains(&doc.doc_id) {
            return Err(PushError::DuplicateDocument(doc.doc_id));
        }
        if let Some(&w) = self.watermarks.get(&doc.entity_id) {
            if doc.timestamp < w {
                return Err(PushError::OutOfOrder {
                    entity_id: doc.entity_id,
                    timestamp: doc.timestamp,
                    watermark: w,
                });
            }
        }
        self.seen.insert(doc.doc_id.clone());
        self.watermarks.insert(doc.entity_id.clone(), doc.timestamp);
        self.metrics
            .record(&self.spec.source.id, &MetricDelta { rows_in: 1, rows_out: 1, ..Default::default() })
            .expect("source is registered");
        let wm = (doc.entity_id.clone(), doc.timestamp);
        self.run(vec![Record::Document(doc)], Some(wm), false)
    }

    /// Ends the stream: every operator drains its pending state. Later
    /// calls return nothing.
    pub fn flush(&mut self) -> Result<Vec<SinkEmission>, PushError> {
        if self.flushed {
            return Ok(Vec::new());
        }
        self.flushed = true;
        self.run(Vec::new(), None, true)
    }

    fn run(
        &mut self,
        input: Vec<Record>,
        watermark: Option<(String, i64)>,
        flush: bool,
    ) -> Result<Vec<SinkEmission>, PushError> {
        let mut outputs: HashMap<String, Vec<Record>> = HashMap::new();
        outputs.insert(self.spec.source.id.clone(), input);
        for node in &mut self.nodes {
            let started = Instant::now();
            let mut rows_in = 0i64;
            let mut out = Vec::new();
            let mut step = || -> Result<(), OperatorError> {
                for (port, input) in node.spec.inputs.iter().enumerate() {
                    for rec in outputs.get(input).into_iter().flatten() {
                        rows_in += 1;
                        out.extend(node.op.process(port, rec.clone(), &node.meter)?);
                    }
                }
                if let Some((entity, ts)) = &watermark {
                    out.extend(node.op.watermark(entity, *ts));
                }
                if flush {
                    out.extend(node.op.flush(&node.meter)?);
                }
                Ok(())
            };
            let result = step();
            let delta = MetricDelta {
                rows_in,
                rows_out: out.len() as i64,
                wall_time_ms: started.elapsed().as_secs_f64() * 1000.0,
                usage: node.meter.take_usage(),
            };
            self.metrics.record(&node.spec.id, &delta).expect("operator is registered");
            node.rows_in += rows_in as u64;
            node.rows.extend(out.iter().cloned());
            result.map_err(|source| PushError::OperatorFailure {
                operator_id: node.spec.id.clone(),
                source,
            })?;
            outputs.insert(node.spec.id.clone(), out);
        }
        let mut emitted = Vec::new();
        for sink in &self.spec.sinks {
            for rec in outputs.get(sink).into_iter().flatten() {
                emitted.push(SinkEmission {
                    sink: sink.clone(),
                    record: rec.clone(),
                });
            }
        }
        self.emissions.extend(emitted.iter().cloned());
        Ok(emitted)
    }

    pub fn trace(&self, operator_id: &str) -> Option<OperatorTrace> {
        let n = self.nodes.iter().find(|n| n.spec.id == operator_id)?;
        Some(OperatorTrace {
            operator_id: n.spec.id.clone(),
            kind: n.spec.kind.clone(),
            rows_in: n.rows_in,
            rows_out: n.rows.len() as u64,
            rows: n.rows.clone(),
            events: n.op.events().to_vec(),
            state: n.op.state(),
        })
    }

    /// Every sink emission so far, in order.
    pub fn emissions(&self) -> &[SinkEmission] {
        &self.emissions
    }

    /// Pattern matches that reached a sink.
    pub fn matches(&self) -> Vec<PatternMatch> {
        self.emissions
            .iter()
            .filter_map(|e| match &e.record {
                Record::Match(m) => Some(m.clone()),
                _ => None,
            })
            .collect()
    }

    /// Every semantic event produced anywhere in the graph, first
    /// occurrence wins.
    pub fn events(&self) -> Vec<SemanticEvent> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for n in &self.nodes {
            let emitted = n.rows.iter().filter_map(|r| match r {
                Record::Event(e) => Some(e),
                _ => None,
            });
            for e in n.op.events().iter().chain(emitted) {
                if seen.insert(e.event_id.clone()) {
                    out.push(e.clone());
                }
            }
        }
        out
    }

    pub fn report(&self) -> RunReport {
        let mut r = self.metrics.report();
        r.run_id = self.run_id.clone();
        r
    }
}
