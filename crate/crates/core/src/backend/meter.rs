use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, Completion, Embedding, ModelBackend, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Complete,
    Embed,
}

impl CallKind {
    fn as_str(self) -> &'static str {
        match self {
            CallKind::Complete => "complete",
            CallKind::Embed => "embed",
        }
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: String,
    pub kind: CallKind,
    pub input_hash: String,
    /// Completion text, or the embedding vector as a JSON array.
    pub output: String,
    pub usage: TokenUsage,
    #[serde(default)]
    pub operator: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub embed_calls: u64,
    pub embedding_tokens: u64,
    pub latency_ms: u64,
}

impl UsageTotals {
    fn add(&mut self, kind: CallKind, u: &TokenUsage) {
        match kind {
            CallKind::Complete => {
                self.calls += 1;
                self.prompt_tokens += u.prompt_tokens;
                self.completion_tokens += u.completion_tokens;
            }
            CallKind::Embed => {
                self.embed_calls += 1;
                self.embedding_tokens += u.prompt_tokens + u.completion_tokens;
            }
        }
        self.latency_ms += u.latency_ms;
    }

    pub fn merge(&mut self, o: &UsageTotals) {
        self.calls += o.calls;
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
        self.embed_calls += o.embed_calls;
        self.embedding_tokens += o.embedding_tokens;
        self.latency_ms += o.latency_ms;
    }

    /// Completion-side tokens, the quantity compared across configurations.
    pub fn model_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

pub fn sha256_hex(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shared, append-only call log for one run.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    records: Arc<Mutex<Vec<CallRecord>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, kind: CallKind, operator: &str, input: &str, output: String, usage: &mut TokenUsage) {
        let mut records = self.records.lock().unwrap();
        usage.call_id = format!("c{:06}", records.len() + 1);
        records.push(CallRecord {
            call_id: usage.call_id.clone(),
            kind,
            input_hash: sha256_hex(input),
            output,
            usage: usage.clone(),
            operator: operator.to_string(),
        });
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .lock()
            .unwrap()
            .iter()
            .map(|r| serde_json::to_string(r).expect("call record serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<CallRecord>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }

    /// Usage summed per operator label.
    pub fn by_operator(&self) -> BTreeMap<String, UsageTotals> {
        let mut out: BTreeMap<String, UsageTotals> = BTreeMap::new();
        for r in self.records.lock().unwrap().iter() {
            out.entry(r.operator.clone()).or_default().add(r.kind, &r.usage);
        }
        out
    }

    pub fn totals(&self) -> UsageTotals {
        let mut t = UsageTotals::default();
        for r in self.records.lock().unwrap().iter() {
            t.add(r.kind, &r.usage);
        }
        t
    }
}

/// Backend wrapper that logs every call to a transcript under an operator
/// label and keeps a running usage tally that callers drain.
pub struct Meter {
    backend: Arc<dyn ModelBackend>,
    transcript: Transcript,
    operator: String,
    pending: Mutex<UsageTotals>,
}

impl Meter {
    pub fn new(backend: Arc<dyn ModelBackend>, transcript: Transcript, operator: impl Into<String>) -> Self {
        Meter {
            backend,
            transcript,
            operator: operator.into(),
            pending: Mutex::new(UsageTotals::default()),
        }
    }

    pub fn operator(&self) -> &str {
        &self.operator
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Usage accumulated since the previous call.
    pub fn take_usage(&self) -> UsageTotals {
        std::mem::take(&mut *self.pending.lock().unwrap())
    }
}

impl std::fmt::Debug for Meter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Meter")
            .field("provider", &self.backend.provider())
            .field("operator", &self.operator)
            .finish()
    }
}

impl ModelBackend for Meter {
    fn provider(&self) -> &str {
        self.backend.provider()
    }

    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let mut c = self.backend.complete(prompt)?;
        self.transcript
            .push(CallKind::Complete, &self.operator, prompt, c.text.clone(), &mut c.usage);
        self.pending.lock().unwrap().add(CallKind::Complete, &c.usage);
        Ok(c)
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let mut e = self.backend.embed(text)?;
        let output = serde_json::to_string(&e.vector).expect("vector serializes");
        self.transcript
            .push(CallKind::Embed, &self.operator, text, output, &mut e.usage);
        self.pending.lock().unwrap().add(CallKind::Embed, &e.usage);
        Ok(e)
    }
}

/// Serves recorded outputs by `(kind, sha256(input))`, in recording order
/// for repeated inputs.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    calls: Mutex<HashMap<(CallKind, String), VecDeque<CallRecord>>>,
}

impl ReplayBackend {
    pub fn new(records: impl IntoIterator<Item = CallRecord>) -> Self {
        let mut calls: HashMap<(CallKind, String), VecDeque<CallRecord>> = HashMap::new();
        for r in records {
            calls.entry((r.kind, r.input_hash.clone())).or_default().push_back(r);
        }
        ReplayBackend {
            calls: Mutex::new(calls),
        }
    }

    fn next(&self, kind: CallKind, input: &str) -> Result<CallRecord, BackendError> {
        let hash = sha256_hex(input);
        self.calls
            .lock()
            .unwrap()
            .get_mut(&(kind, hash.clone()))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::ReplayMiss {
                kind: kind.as_str().to_string(),
                input_hash: hash,
            })
    }
}

impl ModelBackend for ReplayBackend {
    fn provider(&self) -> &str {
        "replay"
    }

    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let r = self.next(CallKind::Complete, prompt)?;
        Ok(Completion {
            text: r.output,
            usage: TokenUsage {
                call_id: String::new(),
                ..r.usage
            },
        })
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let r = self.next(CallKind::Embed, text)?;
        let vector: Vec<f64> = serde_json::from_str(&r.output).map_err(|e| BackendError::Transport {
            provider: "replay".into(),
            message: e.to_string(),
        })?;
        Ok(Embedding {
            empty: vector.iter().all(|x| *x == 0.0),
            vector,
            usage: TokenUsage {
                call_id: String::new(),
                ..r.usage
            },
        })
    }
}
