//! Model backends: completion and embedding providers behind one trait,
//! with per-call token accounting.

mod embed;
#[cfg(feature = "http")]
mod http;
mod meter;
mod mock;
pub mod prompt;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine, hash_embed, tokenize, MOCK_EMBED_DIM};
#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig};
pub use meter::{sha256_hex, CallKind, CallRecord, Meter, ReplayBackend, Transcript, UsageTotals};
pub use mock::{EchoBackend, FnBackend, RuleBackend, ScriptedBackend};
pub use sim::SimulatedLlm;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    /// Assigned by [`Meter`]; empty on raw backend results.
    #[serde(default)]
    pub call_id: String,
}

impl TokenUsage {
    /// Mock accounting: whitespace tokens on both sides.
    pub fn whitespace(prompt: &str, completion: &str) -> Self {
        TokenUsage {
            prompt_tokens: whitespace_tokens(prompt),
            completion_tokens: whitespace_tokens(completion),
            latency_ms: 0,
            call_id: String::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub usage: TokenUsage,
    /// Set when the input had no tokens; the vector is all zeros.
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Complete,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{provider} does not support {capability:?}")]
    Unsupported {
        provider: String,
        capability: Capability,
    },
    #[error("{provider}: {message}")]
    Transport { provider: String, message: String },
    #[error("{provider}: timed out after {timeout_ms} ms")]
    Timeout { provider: String, timeout_ms: u64 },
    #[error("replay: no recorded {kind} call for input {input_hash}")]
    ReplayMiss { kind: String, input_hash: String },
    #[error("scripted backend exhausted after {0} responses")]
    ScriptExhausted(usize),
}

/// A completion and embedding provider. Implementations must be safe to
/// call from several threads at once.
pub trait ModelBackend: Send + Sync {
    fn provider(&self) -> &str;

    fn capabilities(&self) -> &[Capability] {
        &[Capability::Complete, Capability::Embed]
    }

    fn complete(&self, prompt: &str) -> Result<Completion, BackendError>;

    fn embed(&self, text: &str) -> Result<Embedding, BackendError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<T> {
    fn provider(&self) -> &str {
        (**self).provider()
    }
    fn capabilities(&self) -> &[Capability] {
        (**self).capabilities()
    }
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        (**self).complete(prompt)
    }
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        (**self).embed(text)
    }
}
