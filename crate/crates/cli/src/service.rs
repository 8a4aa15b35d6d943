//! HTTP service over pipelines and runs.
//!
//! Every error body is `{code, message, details}`. Runs are held in memory
//! while the process lives and persisted under the data directory; a run
//! from an earlier process is served read-only from disk.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};

use semflow_core::backend::{ModelBackend, Transcript};
use semflow_core::dataflow::{validate_spec, Pipeline, PipelineSpec, PushError, SpecIssue};
use semflow_core::nl::{recompile, synthesize, NlError, ParamEdit, SynthesisOutcome};

use crate::commands::parse_documents;
use crate::store::{PipelineEntry, Store, StoreError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            details: Value::Null,
        }
    }

    fn details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no {what} {id}"))
    }

    fn invalid(issues: Vec<SpecIssue>) -> Self {
        let code = issues.first().map_or("InvalidSpec".to_string(), |i| i.code.clone());
        let message = issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ");
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message).details(json!({ "issues": issues }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageError", e.to_string())
    }
}

fn push_error(e: PushError, accepted: usize) -> ApiError {
    let status = match &e {
        PushError::InvalidDocument { .. } => StatusCode::BAD_REQUEST,
        PushError::DuplicateDocument(_) | PushError::OutOfOrder { .. } | PushError::Terminated => StatusCode::CONFLICT,
        PushError::OperatorFailure { source, .. } if source.code() == "BackendError" => StatusCode::BAD_GATEWAY,
        PushError::OperatorFailure { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let mut details = json!({ "accepted": accepted });
    if let PushError::OperatorFailure { operator_id, .. } = &e {
        details["operator_id"] = json!(operator_id);
    }
    ApiError::new(status, e.code(), e.to_string()).details(details)
}

type ApiResult<T> = Result<T, ApiError>;

struct RunSlot {
    pipeline: Pipeline,
}

struct Inner {
    store: Store,
    backend: Arc<dyn ModelBackend>,
    pipelines: Mutex<HashMap<String, PipelineEntry>>,
    runs: Mutex<HashMap<String, Arc<tokio::sync::Mutex<RunSlot>>>>,
    next_pipeline: AtomicU64,
    next_run: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn next_free(ids: impl Iterator<Item = String>, prefix: &str) -> u64 {
    ids.filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok()).max().map_or(1, |n| n + 1)
}

impl AppState {
    /// Opens `data_dir`, reloading pipelines saved by earlier processes.
    pub fn open(data_dir: impl Into<PathBuf>, backend: Arc<dyn ModelBackend>) -> Result<AppState, StoreError> {
        let store = Store::open(data_dir)?;
        let pipelines: HashMap<String, PipelineEntry> =
            store.load_pipelines()?.into_iter().map(|p| (p.pipeline_id.clone(), p)).collect();
        let next_pipeline = next_free(pipelines.keys().cloned(), "pl-");
        let next_run = next_free(store.run_ids().into_iter(), "run-");
        Ok(AppState {
            inner: Arc::new(Inner {
                store,
                backend,
                pipelines: Mutex::new(pipelines),
                runs: Mutex::new(HashMap::new()),
                next_pipeline: AtomicU64::new(next_pipeline),
                next_run: AtomicU64::new(next_run),
            }),
        })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    fn pipeline(&self, id: &str) -> ApiResult<PipelineEntry> {
        self.inner
            .pipelines
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("pipeline", id))
    }

    fn put_pipeline(&self, entry: PipelineEntry) -> ApiResult<()> {
        self.inner.store.save_pipeline(&entry)?;
        self.inner.pipelines.lock().unwrap().insert(entry.pipeline_id.clone(), entry);
        Ok(())
    }

    fn live_run(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<RunSlot>>> {
        self.inner.runs.lock().unwrap().get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/pipelines", post(create_pipeline))
        .route("/pipelines/{id}", get(get_pipeline))
        .route("/pipelines/{id}/nl", post(compile_nl))
        .route("/pipelines/{id}/recompile", post(recompile_pipeline))
        .route("/pipelines/{id}/runs", post(start_run))
        .route("/runs/{id}/ingest", post(ingest))
        .route("/runs/{id}/flush", post(flush))
        .route("/runs/{id}/operators/{op}/trace", get(trace))
        .route("/runs/{id}/report", get(report))
        .route("/runs/{id}/matches", get(matches))
        .with_state(state)
}

/// CORS for the UI: one origin, or any origin when `None`.
pub fn cors(origin: Option<&str>) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => layer.allow_origin(o),
        None => layer.allow_origin(Any),
    }
}

fn parse_body(body: &str) -> ApiResult<Value> {
    if body.trim().is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidJson", e.to_string()))
}

/// Accepts a bare spec, `{"spec": ...}`, or `{"task": ...}` / `{}` for a
/// pipeline to be compiled later.
async fn create_pipeline(State(st): State<AppState>, body: String) -> ApiResult<impl IntoResponse> {
    let v = parse_body(&body)?;
    let spec_value = if v.get("source").is_some() { Some(v.clone()) } else { v.get("spec").cloned() };
    let spec = match spec_value {
        Some(s) => {
            let spec: PipelineSpec = serde_json::from_value(s)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "SpecParseError", e.to_string()))?;
            let issues = validate_spec(&spec);
            if !issues.is_empty() {
                return Err(ApiError::invalid(issues));
            }
            Some(spec)
        }
        None => None,
    };
    let n = st.inner.next_pipeline.fetch_add(1, Ordering::SeqCst);
    let entry = PipelineEntry {
        pipeline_id: format!("pl-{n:04}"),
        task: v.get("task").and_then(Value::as_str).map(str::to_string),
        spec,
        clarification: None,
    };
    st.put_pipeline(entry.clone())?;
    tracing::info!(pipeline_id = %entry.pipeline_id, "pipeline created");
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn get_pipeline(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PipelineEntry>> {
    st.pipeline(&id).map(Json)
}

#[derive(Deserialize)]
struct NlRequest {
    task: String,
    #[serde(default = "default_rounds")]
    max_rounds: usize,
}

fn default_rounds() -> usize {
    3
}

async fn compile_nl(State(st): State<AppState>, Path(id): Path<String>, body: String) -> ApiResult<Json<Value>> {
    let mut entry = st.pipeline(&id)?;
    let req: NlRequest = serde_json::from_value(parse_body(&body)?)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "UsageError", e.to_string()))?;
    let backend = st.inner.backend.clone();
    let task = req.task.clone();
    let result = tokio::task::spawn_blocking(move || synthesize(&task, backend.as_ref(), req.max_rounds))
        .await
        .expect("synthesis task panicked");
    let r = result.map_err(|e| {
        let status = match e {
            NlError::EmptyTask | NlError::NoRounds => StatusCode::BAD_REQUEST,
            NlError::Backend(_) => StatusCode::BAD_GATEWAY,
            NlError::SynthesisFailed { .. } | NlError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let details = match &e {
            NlError::SynthesisFailed { critiques } => json!({ "critiques": critiques }),
            _ => Value::Null,
        };
        ApiError::new(status, e.code(), e.to_string()).details(details)
    })?;
    entry.task = Some(req.task);
    let body = match r.outcome {
        SynthesisOutcome::Spec(mut spec) => {
            spec.pipeline_id = id.clone();
            entry.spec = Some(spec.clone());
            entry.clarification = None;
            json!({ "pipeline_id": id, "spec": spec, "rounds_used": r.rounds_used, "critiques": r.critiques })
        }
        SynthesisOutcome::Clarification(q) => {
            entry.clarification = Some(q.clone());
            json!({ "pipeline_id": id, "clarification": q, "rounds_used": r.rounds_used })
        }
    };
    st.put_pipeline(entry)?;
    Ok(Json(body))
}

#[derive(Deserialize)]
struct RecompileRequest {
    #[serde(default)]
    edits: Vec<ParamEdit>,
}

async fn recompile_pipeline(State(st): State<AppState>, Path(id): Path<String>, body: String) -> ApiResult<Json<Value>> {
    let mut entry = st.pipeline(&id)?;
    let req: RecompileRequest = serde_json::from_value(parse_body(&body)?)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "UsageError", e.to_string()))?;
    let spec = entry
        .spec
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NoSpec", format!("pipeline {id} has no spec yet")))?;
    let next = recompile(spec, &req.edits).map_err(|e| match e {
        NlError::Invalid(issues) => ApiError::invalid(issues),
        other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other.code(), other.to_string()),
    })?;
    entry.spec = Some(next.clone());
    st.put_pipeline(entry)?;
    Ok(Json(json!({ "pipeline_id": id, "spec": next })))
}

async fn start_run(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let entry = st.pipeline(&id)?;
    let spec = entry
        .spec
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NoSpec", format!("pipeline {id} has no spec yet")))?;
    let mut p = Pipeline::with_transcript(spec.clone(), st.inner.backend.clone(), Transcript::new())
        .map_err(|e| ApiError::invalid(e.issues))?;
    let n = st.inner.next_run.fetch_add(1, Ordering::SeqCst);
    let run_id = format!("run-{n:04}");
    p.set_run_id(&run_id);
    st.inner.store.create_run(&run_id, &spec)?;
    st.inner.store.save_report(&run_id, &p)?;
    st.inner
        .runs
        .lock()
        .unwrap()
        .insert(run_id.clone(), Arc::new(tokio::sync::Mutex::new(RunSlot { pipeline: p })));
    tracing::info!(%run_id, pipeline_id = %id, "run started");
    Ok((StatusCode::CREATED, Json(json!({ "run_id": run_id, "pipeline_id": id }))))
}

/// A run that only exists on disk.
fn closed_or_missing(st: &AppState, id: &str) -> ApiError {
    if st.inner.store.run_exists(id) {
        ApiError::new(StatusCode::CONFLICT, "RunClosed", format!("run {id} is no longer accepting input"))
    } else {
        ApiError::not_found("run", id)
    }
}

async fn ingest(State(st): State<AppState>, Path(id): Path<String>, body: String) -> ApiResult<Json<Value>> {
    let slot = st.live_run(&id).ok_or_else(|| closed_or_missing(&st, &id))?;
    let docs = parse_documents(&body).map_err(|(line, e)| {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidJson", format!("line {line}: {e}")).details(json!({ "line": line }))
    })?;
    // the async lock is fair, so ingests against one run apply in arrival order
    let guard = slot.lock_owned().await;
    let store = st.inner.store.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let p = &mut guard.pipeline;
        let mut emitted = Vec::new();
        let total = docs.len();
        let mut failure = None;
        for (i, d) in docs.into_iter().enumerate() {
            match p.push(d) {
                Ok(out) => emitted.extend(out),
                Err(e) => {
                    failure = Some(push_error(e, i));
                    break;
                }
            }
        }
        store.save_report(&id, p)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(Json(json!({ "run_id": id, "accepted": total, "emitted": emitted }))),
        }
    })
    .await
    .expect("ingest task panicked")
}

async fn flush(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = st.live_run(&id).ok_or_else(|| closed_or_missing(&st, &id))?;
    let guard = slot.lock_owned().await;
    let store = st.inner.store.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let p = &mut guard.pipeline;
        let emitted = p.flush().map_err(|e| push_error(e, 0))?;
        store.save_run(&id, p)?;
        Ok(Json(json!({ "run_id": id, "emitted": emitted, "report": p.report() })))
    })
    .await
    .expect("flush task panicked")
}

async fn trace(State(st): State<AppState>, Path((id, op)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    if let Some(slot) = st.live_run(&id) {
        let guard = slot.lock().await;
        let t = guard.pipeline.trace(&op).ok_or_else(|| ApiError::not_found("operator", &op))?;
        return Ok(Json(serde_json::to_value(t).expect("trace serializes")));
    }
    if !st.inner.store.run_exists(&id) {
        return Err(ApiError::not_found("run", &id));
    }
    st.inner.store.read_trace(&id, &op)?.map(Json).ok_or_else(|| ApiError::not_found("operator", &op))
}

async fn report(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if let Some(slot) = st.live_run(&id) {
        let guard = slot.lock().await;
        return Ok(Json(serde_json::to_value(guard.pipeline.report()).expect("report serializes")));
    }
    st.inner.store.read_report(&id)?.map(Json).ok_or_else(|| ApiError::not_found("run", &id))
}

async fn matches(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if let Some(slot) = st.live_run(&id) {
        let guard = slot.lock().await;
        return Ok(Json(serde_json::to_value(guard.pipeline.matches()).expect("matches serialize")));
    }
    if !st.inner.store.run_exists(&id) {
        return Err(ApiError::not_found("run", &id));
    }
    Ok(Json(st.inner.store.read_matches(&id)?.unwrap_or_else(|| json!([]))))
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    DataDir(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServeError {
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::PortInUse(_) => "PortInUse",
            ServeError::DataDir(_) => "DataDirError",
            ServeError::Io(_) => "IoError",
        }
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(
    addr: SocketAddr,
    data_dir: PathBuf,
    backend: Arc<dyn ModelBackend>,
    cors_origin: Option<String>,
) -> Result<(), ServeError> {
    let state = AppState::open(data_dir, backend)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr.port()),
        _ => ServeError::Io(e),
    })?;
    tracing::info!(%addr, data_dir = %state.store().root().display(), "listening");
    let app = router(state).layer(cors(cors_origin.as_deref()));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
