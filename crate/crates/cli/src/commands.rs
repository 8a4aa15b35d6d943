use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use semflow_core::backend::{ModelBackend, SimulatedLlm, Transcript};
use semflow_core::dataflow::{Pipeline, PipelineSpec};
use semflow_core::harness::{gen_stream, suite_clustering, suite_configs, suite_oracle, GenConfig, Suite};
use semflow_core::metrics::RunReport;
use semflow_core::nl::{synthesize, NlError, SynthesisOutcome};
use semflow_core::Document;

use crate::store::write_run_files;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_CLARIFICATION: u8 = 4;

/// A failed command: the exit code, plus the machine-readable code printed
/// first on stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub exit: u8,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(exit: u8, code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            exit,
            code: code.into(),
            message: message.into(),
        }
    }

    fn validation(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(EXIT_VALIDATION, code, message)
    }

    fn runtime(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(EXIT_RUNTIME, code, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::runtime("FileError", format!("{}: {e}", path.display())))
}

/// `sim` is always available; `http` needs the `http` feature and the
/// `MODEL_API_BASE` / `MODEL_API_KEY` variables.
pub fn backend_from_name(name: &str) -> Result<Arc<dyn ModelBackend>, CliError> {
    match name {
        "sim" => Ok(Arc::new(SimulatedLlm::new())),
        #[cfg(feature = "http")]
        "http" => {
            use semflow_core::backend::{HttpBackend, HttpConfig};
            let model = std::env::var("MODEL_NAME").unwrap_or_else(|_| "gpt-4o-mini".into());
            let embed = std::env::var("MODEL_EMBEDDING").unwrap_or_else(|_| "text-embedding-3-small".into());
            let config = HttpConfig::from_env(model, embed)
                .ok_or_else(|| CliError::runtime("BackendError", "MODEL_API_BASE and MODEL_API_KEY must be set"))?;
            Ok(Arc::new(HttpBackend::new(config)))
        }
        other => Err(CliError::validation("UsageError", format!("unknown backend {other}"))),
    }
}

pub fn parse_spec(text: &str) -> Result<PipelineSpec, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::validation("SpecParseError", e.to_string()))
}

/// One document per non-blank line.
pub fn parse_documents(text: &str) -> Result<Vec<Document>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub matches: usize,
    /// Where matches.jsonl and the other artifacts were written.
    pub out_dir: PathBuf,
}

/// Builds the pipeline, streams every document, flushes and writes the
/// artifacts next to `report_file`.
pub fn cli_run(
    pipeline_file: &Path,
    input_file: &Path,
    report_file: &Path,
    backend: Arc<dyn ModelBackend>,
) -> Result<RunOutcome, CliError> {
    let spec = parse_spec(&read_file(pipeline_file)?)?;
    let mut p = Pipeline::with_transcript(spec, backend, Transcript::new())
        .map_err(|e| CliError::validation(e.code(), e.to_string()))?;
    let docs = parse_documents(&read_file(input_file)?)
        .map_err(|(line, e)| CliError::runtime("InvalidInput", format!("{} line {line}: {e}", input_file.display())))?;
    p.set_run_id("cli");
    for d in docs {
        p.push(d).map_err(|e| CliError::runtime(e.code(), e.to_string()))?;
    }
    p.flush().map_err(|e| CliError::runtime(e.code(), e.to_string()))?;
    let out_dir = match report_file.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    write_run_files(&out_dir, &p, report_file)
        .map_err(|e| CliError::runtime("FileError", format!("{}: {e}", out_dir.display())))?;
    Ok(RunOutcome {
        report: p.report(),
        matches: p.matches().len(),
        out_dir,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileOutput {
    Spec(PipelineSpec),
    Clarification(String),
}

impl CompileOutput {
    pub fn exit_code(&self) -> u8 {
        match self {
            CompileOutput::Spec(_) => EXIT_OK,
            CompileOutput::Clarification(_) => EXIT_CLARIFICATION,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CompileOutput::Spec(s) => serde_json::to_value(s).expect("spec serializes"),
            CompileOutput::Clarification(q) => json!({ "clarification": q }),
        }
    }

    /// Pretty JSON with the spec's fields in declaration order.
    pub fn render(&self) -> String {
        match self {
            CompileOutput::Spec(s) => serde_json::to_string_pretty(s).expect("spec serializes"),
            CompileOutput::Clarification(_) => serde_json::to_string_pretty(&self.to_json()).expect("json"),
        }
    }
}

pub fn cli_compile_nl(task: &str, backend: &dyn ModelBackend, max_rounds: usize) -> Result<CompileOutput, CliError> {
    match synthesize(task, backend, max_rounds) {
        Ok(r) => Ok(match r.outcome {
            SynthesisOutcome::Spec(s) => CompileOutput::Spec(s),
            SynthesisOutcome::Clarification(q) => CompileOutput::Clarification(q),
        }),
        Err(e @ NlError::Backend(_)) => Err(CliError::runtime(e.code(), e.to_string())),
        Err(e) => Err(CliError::validation(e.code(), e.to_string())),
    }
}

pub fn cli_compile_nl_file(task_file: &Path, backend: &dyn ModelBackend, max_rounds: usize) -> Result<CompileOutput, CliError> {
    cli_compile_nl(&read_file(task_file)?, backend, max_rounds)
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub seed: u64,
    pub cases: usize,
    pub docs: usize,
    pub generator: GenConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: 7,
            cases: 1000,
            docs: 200,
            generator: GenConfig::default(),
        }
    }
}

/// Runs one suite and writes its report to `out`.
pub fn cli_bench(suite: Suite, opts: &BenchOptions, out: &Path) -> Result<Value, CliError> {
    let report = match suite {
        Suite::Oracle => suite_oracle(opts.cases, opts.seed),
        Suite::Clustering => {
            suite_clustering(opts.seed, opts.docs).map_err(|e| CliError::runtime("HarnessError", e.to_string()))?
        }
        Suite::Configs => {
            suite_configs(opts.seed, &opts.generator).map_err(|e| CliError::runtime("HarnessError", e.to_string()))?
        }
    };
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out, body + "\n").map_err(|e| CliError::runtime("FileError", format!("{}: {e}", out.display())))?;
    Ok(report)
}

/// Writes a generated stream and its ground truth.
pub fn cli_gen(seed: u64, config: &GenConfig, out: &Path, truth: Option<&Path>) -> Result<usize, CliError> {
    let s = gen_stream(seed, config).map_err(|e| CliError::validation("ConfigError", e.to_string()))?;
    fs::write(out, s.to_jsonl()).map_err(|e| CliError::runtime("FileError", format!("{}: {e}", out.display())))?;
    if let Some(t) = truth {
        let body = serde_json::to_string_pretty(&s.ground_truth).expect("truth serializes");
        fs::write(t, body).map_err(|e| CliError::runtime("FileError", format!("{}: {e}", t.display())))?;
    }
    Ok(s.documents.len())
}
