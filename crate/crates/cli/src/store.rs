//! Flat-file persistence: one directory per run, one JSON file per pipeline.
//!
//! ```text
//! <data_dir>/pipelines/<pipeline_id>.json
//! <data_dir>/runs/<run_id>/spec.json
//!                          events.jsonl
//!                          matches.jsonl
//!                          outputs.jsonl
//!                          report.json
//!                          transcript.jsonl
//!                          traces/<operator_id>.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use semflow_core::dataflow::{Pipeline, PipelineSpec};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("data directory {path} is not usable: {source}")]
    DataDir { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// A pipeline as the service knows it: a spec once one exists, and the task
/// it was compiled from, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEntry {
    pub pipeline_id: String,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub spec: Option<PipelineSpec>,
    #[serde(default)]
    pub clarification: Option<String>,
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes a finished or in-progress run's artifacts into `dir`. The report
/// goes to `report_file`, which need not live in `dir`.
pub fn write_run_files(dir: &Path, p: &Pipeline, report_file: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(parent) = report_file.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(dir.join("matches.jsonl"), to_jsonl(p.matches()))?;
    fs::write(dir.join("events.jsonl"), to_jsonl(p.events()))?;
    fs::write(dir.join("outputs.jsonl"), to_jsonl(p.emissions()))?;
    fs::write(dir.join("transcript.jsonl"), p.transcript().to_jsonl())?;
    let report = serde_json::to_string_pretty(&p.report()).expect("report serializes");
    fs::write(report_file, report + "\n")
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Creates the layout under `root` and checks that it is writable.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        let check = || -> io::Result<()> {
            fs::create_dir_all(root.join("runs"))?;
            fs::create_dir_all(root.join("pipelines"))?;
            let probe = root.join(".write-probe");
            fs::write(&probe, b"ok")?;
            fs::remove_file(probe)
        };
        check().map_err(|source| StoreError::DataDir {
            path: root.clone(),
            source,
        })?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn run_exists(&self, run_id: &str) -> bool {
        self.run_dir(run_id).join("spec.json").is_file()
    }

    fn ids(&self, sub: &str) -> Vec<String> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join(sub))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .map(|n| n.trim_end_matches(".json").to_string())
            .filter(|n| !n.starts_with('.'))
            .collect();
        ids.sort();
        ids
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.ids("runs")
    }

    pub fn save_pipeline(&self, entry: &PipelineEntry) -> Result<(), StoreError> {
        let path = self.root.join("pipelines").join(format!("{}.json", entry.pipeline_id));
        fs::write(path, serde_json::to_string_pretty(entry).expect("entry serializes"))?;
        Ok(())
    }

    pub fn load_pipelines(&self) -> Result<Vec<PipelineEntry>, StoreError> {
        self.ids("pipelines")
            .into_iter()
            .map(|id| self.read_json(&self.root.join("pipelines").join(format!("{id}.json"))))
            .collect()
    }

    pub fn create_run(&self, run_id: &str, spec: &PipelineSpec) -> Result<(), StoreError> {
        let dir = self.run_dir(run_id);
        fs::create_dir_all(dir.join("traces"))?;
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec).expect("spec serializes"))?;
        Ok(())
    }

    /// Rewrites the report only; cheap enough to do after every ingest.
    pub fn save_report(&self, run_id: &str, p: &Pipeline) -> Result<(), StoreError> {
        let report = serde_json::to_string_pretty(&p.report()).expect("report serializes");
        fs::write(self.run_dir(run_id).join("report.json"), report + "\n")?;
        Ok(())
    }

    pub fn save_run(&self, run_id: &str, p: &Pipeline) -> Result<(), StoreError> {
        let dir = self.run_dir(run_id);
        write_run_files(&dir, p, &dir.join("report.json"))?;
        fs::create_dir_all(dir.join("traces"))?;
        for op in p.order() {
            if let Some(t) = p.trace(op) {
                let body = serde_json::to_string(&t).expect("trace serializes");
                fs::write(dir.join("traces").join(format!("{op}.json")), body)?;
            }
        }
        Ok(())
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T, StoreError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    fn read_optional(&self, path: PathBuf) -> Result<Option<Value>, StoreError> {
        if !path.is_file() {
            return Ok(None);
        }
        self.read_json(&path).map(Some)
    }

    pub fn read_spec(&self, run_id: &str) -> Result<Option<PipelineSpec>, StoreError> {
        let path = self.run_dir(run_id).join("spec.json");
        if !path.is_file() {
            return Ok(None);
        }
        self.read_json(&path).map(Some)
    }

    pub fn read_report(&self, run_id: &str) -> Result<Option<Value>, StoreError> {
        self.read_optional(self.run_dir(run_id).join("report.json"))
    }

    pub fn read_trace(&self, run_id: &str, op: &str) -> Result<Option<Value>, StoreError> {
        self.read_optional(self.run_dir(run_id).join("traces").join(format!("{op}.json")))
    }

    pub fn read_matches(&self, run_id: &str) -> Result<Option<Value>, StoreError> {
        let path = self.run_dir(run_id).join("matches.jsonl");
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Value>, _>>()
            .map_err(|source| StoreError::Json { path, source })?;
        Ok(Some(Value::Array(rows)))
    }
}
