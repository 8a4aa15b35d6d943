//! The four end-to-end configurations compared on planted streams: two
//! full-context baselines that re-judge the whole history at every step, and
//! the extraction-plus-automaton pipeline, each with and without retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::eval::MatchKey;
use super::gen::{planted_schema, PLANTED_PATTERN, PLANTED_PATTERN_ID};
use crate::backend::prompt::Prompt;
use crate::backend::{BackendError, Meter, ModelBackend, Transcript, UsageTotals};
use crate::dataflow::{BuildError, OperatorSpec, Pipeline, PipelineSpec, PushError};
use crate::extract::EventSchema;
use crate::index::{Chunking, IndexError, RetrievalIndex};
use crate::metrics::{MetricDelta, RunMetrics, RunReport};
use crate::types::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigName {
    BaselineFullContext,
    BaselineRag,
    SemPattern,
    SemPatternRag,
}

impl ConfigName {
    pub const ALL: [ConfigName; 4] = [
        ConfigName::BaselineFullContext,
        ConfigName::BaselineRag,
        ConfigName::SemPattern,
        ConfigName::SemPatternRag,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConfigName::BaselineFullContext => "baseline_full_context",
            ConfigName::BaselineRag => "baseline_rag",
            ConfigName::SemPattern => "sem_pattern",
            ConfigName::SemPatternRag => "sem_pattern_rag",
        }
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown configuration {s}"))
    }
}

/// What to detect and how retrieval is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTask {
    pub pattern: String,
    pub pattern_id: String,
    pub schema: EventSchema,
    /// Chunks retrieved per event type in the retrieval variants.
    pub rag_k: usize,
    pub chunking: Chunking,
}

impl PatternTask {
    /// The pattern planted by the stream generator.
    pub fn planted() -> Self {
        PatternTask {
            pattern: PLANTED_PATTERN.into(),
            pattern_id: PLANTED_PATTERN_ID.into(),
            schema: planted_schema(),
            rag_k: 1,
            chunking: Chunking::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Push(#[from] PushError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Op(#[from] crate::ops::OpError),
    #[error(transparent)]
    Gen(#[from] super::gen::GenError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRun {
    pub config: ConfigName,
    pub matches: Vec<MatchKey>,
    pub report: RunReport,
    /// Sum over the run's transcript.
    pub usage: UsageTotals,
}

pub fn run_config(
    config: ConfigName,
    stream: &[Document],
    task: &PatternTask,
    backend: Arc<dyn ModelBackend>,
) -> Result<ConfigRun, HarnessError> {
    let transcript = Transcript::new();
    let (matches, report) = match config {
        ConfigName::SemPattern => pipeline_run(config, stream, task, None, backend, &transcript)?,
        ConfigName::SemPatternRag => {
            pipeline_run(config, stream, task, Some(task.rag_k), backend, &transcript)?
        }
        ConfigName::BaselineFullContext => baseline_run(config, stream, task, false, backend, &transcript)?,
        ConfigName::BaselineRag => baseline_run(config, stream, task, true, backend, &transcript)?,
    };
    Ok(ConfigRun {
        config,
        matches,
        report,
        usage: transcript.totals(),
    })
}

/// The single-operator pipeline: extraction fused with matching.
pub fn sem_pattern_spec(task: &PatternTask, rag_k: Option<usize>) -> PipelineSpec {
    let mut op = OperatorSpec::new("sem_pattern", "sem_pattern", &["docs"])
        .param("schema", serde_json::to_value(&task.schema).expect("schema serializes"))
        .param("pattern", task.pattern.clone())
        .param("pattern_id", task.pattern_id.clone());
    if let Some(k) = rag_k {
        op = op
            .param("rag_k", k)
            .param("chunk_size", task.chunking.size)
            .param("chunk_overlap", task.chunking.overlap);
    }
    PipelineSpec::new("sem_pattern", "docs").operator(op).sink("sem_pattern")
}

fn pipeline_run(
    config: ConfigName,
    stream: &[Document],
    task: &PatternTask,
    rag_k: Option<usize>,
    backend: Arc<dyn ModelBackend>,
    transcript: &Transcript,
) -> Result<(Vec<MatchKey>, RunReport), HarnessError> {
    let mut p = Pipeline::with_transcript(sem_pattern_spec(task, rag_k), backend, transcript.clone())?;
    p.set_run_id(config.as_str());
    for d in stream {
        p.push(d.clone())?;
    }
    p.flush()?;
    let keys: BTreeSet<MatchKey> = p.matches().iter().map(MatchKey::from).collect();
    Ok((keys.into_iter().collect(), p.report()))
}

const JUDGE_INSTRUCTION: &str = "The narrative lists an entity's documents in time order. \
Decide whether the temporal pattern is satisfied. Answer with a JSON array with one \
{\"timestamps\": [...]} object per match, listing the times of the matched events, or [] if none.";

/// Re-judges each entity's history after every document; a final call per
/// entity judges at end of stream. The retrieval variant shows the judge
/// only the chunks closest to each event type instead of whole documents.
fn baseline_run(
    config: ConfigName,
    stream: &[Document],
    task: &PatternTask,
    rag: bool,
    backend: Arc<dyn ModelBackend>,
    transcript: &Transcript,
) -> Result<(Vec<MatchKey>, RunReport), HarnessError> {
    let ops: Vec<(&str, &str)> = if rag {
        vec![("docs", "source"), ("retrieve", "retrieve"), ("judge", "judge")]
    } else {
        vec![("docs", "source"), ("judge", "judge")]
    };
    let mut metrics = RunMetrics::new(config.as_str(), config.as_str(), ops);
    let judge_meter = Meter::new(backend.clone(), transcript.clone(), "judge");
    let retrieve_meter = Meter::new(backend, transcript.clone(), "retrieve");
    let mut history: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut indexes: BTreeMap<String, RetrievalIndex> = BTreeMap::new();
    let mut found: BTreeSet<MatchKey> = BTreeSet::new();
    let listing = task.schema.listing();

    let judge = |entity: &str, narrative: String, now: Option<i64>, metrics: &mut RunMetrics, found: &mut BTreeSet<MatchKey>| -> Result<(), HarnessError> {
        let started = Instant::now();
        let mut prompt = Prompt::new("judge")
            .section("instruction", JUDGE_INSTRUCTION)
            .section("pattern", &task.pattern)
            .section("event types", &listing)
            .section("narrative", narrative);
        prompt = match now {
            Some(t) => prompt.section("status", "open").section("now", t.to_string()),
            None => prompt.section("status", "final"),
        };
        let reply = judge_meter.complete(&prompt.render())?.text;
        let before = found.len();
        found.extend(parse_verdict(&reply).into_iter().map(|timestamps| MatchKey {
            entity_id: entity.to_string(),
            pattern_id: task.pattern_id.clone(),
            timestamps,
        }));
        metrics
            .record(
                "judge",
                &MetricDelta {
                    rows_in: now.is_some() as i64,
                    rows_out: (found.len() - before) as i64,
                    wall_time_ms: started.elapsed().as_secs_f64() * 1000.0,
                    usage: judge_meter.take_usage(),
                },
            )
            .expect("judge is registered");
        Ok(())
    };

    let retrieve = |index: &RetrievalIndex| -> Result<String, HarnessError> {
        let mut chunks = BTreeMap::new();
        for t in &task.schema.types {
            let query = format!("{} {} {}", t.event_type, t.extraction_prompt, t.keywords.join(" "));
            for (c, _) in index.top_k(&retrieve_meter, &query, task.rag_k.max(1))? {
                chunks.insert((c.timestamp, c.chunk_id.clone()), c.text.clone());
            }
        }
        Ok(chunks
            .into_iter()
            .map(|((ts, _), text)| format!("[t={ts}] {text}"))
            .collect::<Vec<_>>()
            .join("\n"))
    };

    for d in stream {
        metrics
            .record("docs", &MetricDelta { rows_in: 1, rows_out: 1, ..Default::default() })
            .expect("source is registered");
        let narrative = if rag {
            let started = Instant::now();
            let index = indexes
                .entry(d.entity_id.clone())
                .or_insert_with(|| RetrievalIndex::new(task.chunking));
            index.add(d, &retrieve_meter)?;
            let n = retrieve(index)?;
            metrics
                .record(
                    "retrieve",
                    &MetricDelta {
                        rows_in: 1,
                        rows_out: 1,
                        wall_time_ms: started.elapsed().as_secs_f64() * 1000.0,
                        usage: retrieve_meter.take_usage(),
                    },
                )
                .expect("retrieve is registered");
            n
        } else {
            let lines = history.entry(d.entity_id.clone()).or_default();
            lines.push(format!("[t={}] {}", d.timestamp, d.text.replace('\n', " ")));
            lines.join("\n")
        };
        judge(&d.entity_id, narrative, Some(d.timestamp), &mut metrics, &mut found)?;
    }
    let entities: BTreeSet<&str> = stream.iter().map(|d| d.entity_id.as_str()).collect();
    for e in entities {
        let narrative = if rag {
            let started = Instant::now();
            let n = retrieve(&indexes[e])?;
            metrics
                .record(
                    "retrieve",
                    &MetricDelta {
                        wall_time_ms: started.elapsed().as_secs_f64() * 1000.0,
                        usage: retrieve_meter.take_usage(),
                        ..Default::default()
                    },
                )
                .expect("retrieve is registered");
            n
        } else {
            history[e].join("\n")
        };
        judge(e, narrative, None, &mut metrics, &mut found)?;
    }
    Ok((found.into_iter().collect(), metrics.report()))
}

fn parse_verdict(reply: &str) -> Vec<Vec<i64>> {
    let body = match (reply.find('['), reply.rfind(']')) {
        (Some(s), Some(e)) if s < e => &reply[s..=e],
        _ => return Vec::new(),
    };
    let Ok(Value::Array(items)) = serde_json::from_str::<Value>(body) else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|i| serde_json::from_value::<Vec<i64>>(i.get("timestamps")?.clone()).ok())
        .collect()
}

/// Summary line per configuration: accuracy against `truth` and tokens.
pub fn config_summary(run: &ConfigRun, truth: &[MatchKey]) -> Value {
    let s = super::eval::eval_pattern(&run.matches, truth);
    json!({
        "config": run.config.as_str(),
        "matches": run.matches.len(),
        "precision": s.precision,
        "recall": s.recall,
        "f1": s.f1,
        "model_tokens": run.usage.model_tokens(),
        "embedding_tokens": run.usage.embedding_tokens,
        "calls": run.usage.calls,
        "embed_calls": run.usage.embed_calls,
    })
}
