//! Per-operator execution counters and run reports.

use std::collections::HashMap;
use std::sync::Mutex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::UsageTotals;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("operator {0} is not part of this run")]
    UnknownOperator(String),
    #[error("negative delta for {field}")]
    NegativeDelta { field: &'static str },
}

/// One increment to an operator's counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricDelta {
    pub rows_in: i64,
    pub rows_out: i64,
    pub wall_time_ms: f64,
    pub usage: UsageTotals,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub embed_calls: u64,
    pub embedding_tokens: u64,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetrics {
    pub operator_id: String,
    pub kind: String,
    pub rows_in: u64,
    pub rows_out: u64,
    pub wall_time_ms: f64,
    /// `rows_in` per second of wall time; absent while wall time is zero.
    pub throughput_rows_per_s: Option<f64>,
    /// Present for operators that called a model.
    pub model: Option<ModelMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub rows_in: u64,
    pub rows_out: u64,
    pub wall_time_ms: f64,
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub embed_calls: u64,
    pub embedding_tokens: u64,
    /// Prompt plus completion tokens; embedding tokens are reported apart.
    pub total_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub pipeline_id: String,
    pub operators: Vec<OperatorMetrics>,
    pub totals: RunTotals,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<Accuracy>,
    #[serde(default)]
    pub notes: Vec<String>,
}

const TIMING_FIELDS: &[&str] = &["wall_time_ms", "throughput_rows_per_s", "mean_latency_ms"];

impl RunReport {
    /// The report as JSON with every timing field removed, for determinism
    /// comparisons.
    pub fn without_timing(&self) -> serde_json::Value {
        fn strip(v: &mut serde_json::Value) {
            match v {
                serde_json::Value::Object(m) => {
                    for f in TIMING_FIELDS {
                        m.remove(*f);
                    }
                    m.values_mut().for_each(strip);
                }
                serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
                _ => {}
            }
        }
        let mut v = serde_json::to_value(self).expect("report serializes");
        strip(&mut v);
        v
    }

    pub fn operator(&self, id: &str) -> Option<&OperatorMetrics> {
        self.operators.iter().find(|o| o.operator_id == id)
    }
}

#[derive(Debug, Clone, Default)]
struct Counters {
    kind: String,
    rows_in: u64,
    rows_out: u64,
    wall_time_ms: f64,
    usage: UsageTotals,
}

/// Counters for one run, keyed by operator in pipeline order.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    run_id: String,
    pipeline_id: String,
    ops: IndexMap<String, Counters>,
}

impl RunMetrics {
    pub fn new<'a>(
        run_id: impl Into<String>,
        pipeline_id: impl Into<String>,
        operators: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        RunMetrics {
            run_id: run_id.into(),
            pipeline_id: pipeline_id.into(),
            ops: operators
                .into_iter()
                .map(|(id, kind)| {
                    (
                        id.to_string(),
                        Counters {
                            kind: kind.to_string(),
                            ..Counters::default()
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn record(&mut self, op: &str, delta: &MetricDelta) -> Result<(), MetricsError> {
        if delta.rows_in < 0 {
            return Err(MetricsError::NegativeDelta { field: "rows_in" });
        }
        if delta.rows_out < 0 {
            return Err(MetricsError::NegativeDelta { field: "rows_out" });
        }
        if delta.wall_time_ms < 0.0 || delta.wall_time_ms.is_nan() {
            return Err(MetricsError::NegativeDelta { field: "wall_time_ms" });
        }
        let c = self
            .ops
            .get_mut(op)
            .ok_or_else(|| MetricsError::UnknownOperator(op.to_string()))?;
        c.rows_in += delta.rows_in as u64;
        c.rows_out += delta.rows_out as u64;
        c.wall_time_ms += delta.wall_time_ms;
        c.usage.merge(&delta.usage);
        Ok(())
    }

    pub fn report(&self) -> RunReport {
        let mut totals = RunTotals::default();
        let operators = self
            .ops
            .iter()
            .map(|(id, c)| {
                totals.rows_in += c.rows_in;
                totals.rows_out += c.rows_out;
                totals.wall_time_ms += c.wall_time_ms;
                totals.calls += c.usage.calls;
                totals.prompt_tokens += c.usage.prompt_tokens;
                totals.completion_tokens += c.usage.completion_tokens;
                totals.embed_calls += c.usage.embed_calls;
                totals.embedding_tokens += c.usage.embedding_tokens;
                let all_calls = c.usage.calls + c.usage.embed_calls;
                OperatorMetrics {
                    operator_id: id.clone(),
                    kind: c.kind.clone(),
                    rows_in: c.rows_in,
                    rows_out: c.rows_out,
                    wall_time_ms: c.wall_time_ms,
                    throughput_rows_per_s: (c.wall_time_ms > 0.0)
                        .then(|| c.rows_in as f64 / (c.wall_time_ms / 1000.0)),
                    model: (all_calls > 0).then(|| ModelMetrics {
                        calls: c.usage.calls,
                        prompt_tokens: c.usage.prompt_tokens,
                        completion_tokens: c.usage.completion_tokens,
                        embed_calls: c.usage.embed_calls,
                        embedding_tokens: c.usage.embedding_tokens,
                        mean_latency_ms: c.usage.latency_ms as f64 / all_calls as f64,
                    }),
                }
            })
            .collect();
        totals.total_tokens = totals.prompt_tokens + totals.completion_tokens;
        RunReport {
            run_id: self.run_id.clone(),
            pipeline_id: self.pipeline_id.clone(),
            operators,
            totals,
            accuracy: None,
            notes: Vec::new(),
        }
    }
}

/// Runs addressable by id, safe to share between request handlers.
#[derive(Debug, Default)]
pub struct MetricsRegistry {
    runs: Mutex<HashMap<String, RunMetrics>>,
}

impl MetricsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, metrics: RunMetrics) {
        self.runs.lock().unwrap().insert(metrics.run_id.clone(), metrics);
    }

    pub fn record(&self, run_id: &str, op: &str, delta: &MetricDelta) -> Result<(), MetricsError> {
        self.runs
            .lock()
            .unwrap()
            .get_mut(run_id)
            .ok_or_else(|| MetricsError::RunNotFound(run_id.to_string()))?
            .record(op, delta)
    }

    pub fn report(&self, run_id: &str) -> Result<RunReport, MetricsError> {
        self.runs
            .lock()
            .unwrap()
            .get(run_id)
            .map(RunMetrics::report)
            .ok_or_else(|| MetricsError::RunNotFound(run_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(i: i64, o: i64) -> MetricDelta {
        MetricDelta {
            rows_in: i,
            rows_out: o,
            ..Default::default()
        }
    }

    #[test]
    fn deltas_accumulate() {
        let mut m = RunMetrics::new("r", "p", [("f", "filter")]);
        m.record("f", &rows(1, 1)).unwrap();
        m.record("f", &rows(1, 0)).unwrap();
        let usage = UsageTotals {
            calls: 1,
            prompt_tokens: 10,
            completion_tokens: 2,
            ..Default::default()
        };
        for _ in 0..2 {
            m.record("f", &MetricDelta { usage, ..Default::default() }).unwrap();
        }
        let r = m.report();
        let f = r.operator("f").unwrap();
        assert_eq!((f.rows_in, f.rows_out), (2, 1));
        assert_eq!(f.model.as_ref().unwrap().prompt_tokens, 20);
        assert_eq!(r.totals.total_tokens, 24);
    }

    #[test]
    fn rejects_bad_deltas() {
        let mut m = RunMetrics::new("r", "p", [("f", "filter")]);
        assert_eq!(m.record("f", &rows(-1, 0)), Err(MetricsError::NegativeDelta { field: "rows_in" }));
        assert_eq!(m.record("g", &rows(1, 0)), Err(MetricsError::UnknownOperator("g".into())));
    }

    #[test]
    fn empty_run_and_missing_run() {
        let reg = MetricsRegistry::new();
        reg.insert(RunMetrics::new("r1", "p", [("a", "filter")]));
        let r = reg.report("r1").unwrap();
        assert_eq!(r.totals, RunTotals::default());
        assert!(r.operators[0].throughput_rows_per_s.is_none());
        assert_eq!(reg.report("nope"), Err(MetricsError::RunNotFound("nope".into())));
    }

    #[test]
    fn timing_stripped() {
        let mut m = RunMetrics::new("r", "p", [("a", "filter")]);
        m.record("a", &MetricDelta { rows_in: 3, wall_time_ms: 2.5, ..Default::default() }).unwrap();
        let v = m.report().without_timing();
        assert!(v["operators"][0].get("wall_time_ms").is_none());
        assert!(v["totals"].get("wall_time_ms").is_none());
        assert_eq!(v["operators"][0]["rows_in"], 3);
    }
}
