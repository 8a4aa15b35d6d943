//! OpenAI-style chat-completions and embeddings client.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendError, Completion, Embedding, ModelBackend, TokenUsage};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    pub embedding_model: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl HttpConfig {
    /// Reads `MODEL_API_BASE` and `MODEL_API_KEY`.
    pub fn from_env(model: impl Into<String>, embedding_model: impl Into<String>) -> Option<Self> {
        Some(HttpConfig {
            api_base: std::env::var("MODEL_API_BASE").ok()?,
            api_key: std::env::var("MODEL_API_KEY").ok()?,
            model: model.into(),
            embedding_model: embedding_model.into(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
        })
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        HttpBackend { config, agent }
    }

    fn post(&self, path: &str, body: &Value) -> Result<(Value, u64), BackendError> {
        let url = format!("{}/{}", self.config.api_base.trim_end_matches('/'), path);
        let mut last = String::new();
        for _ in 0..=self.config.max_retries {
            let started = Instant::now();
            let res = self
                .agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.config.api_key))
                .send_json(body.clone());
            let elapsed = started.elapsed().as_millis() as u64;
            match res {
                Ok(resp) => {
                    let v: Value = resp.into_json().map_err(|e| self.transport(e.to_string()))?;
                    return Ok((v, elapsed));
                }
                Err(ureq::Error::Status(code, resp)) if code < 500 && code != 429 => {
                    return Err(self.transport(format!(
                        "HTTP {code}: {}",
                        resp.into_string().unwrap_or_default()
                    )));
                }
                Err(ureq::Error::Transport(t)) if t.kind() == ureq::ErrorKind::Io => {
                    if elapsed >= self.config.timeout.as_millis() as u64 {
                        return Err(BackendError::Timeout {
                            provider: self.provider().to_string(),
                            timeout_ms: elapsed,
                        });
                    }
                    last = t.to_string();
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(self.transport(last))
    }

    fn transport(&self, message: String) -> BackendError {
        BackendError::Transport {
            provider: self.provider().to_string(),
            message,
        }
    }
}

fn tokens(v: &Value, key: &str) -> u64 {
    v["usage"][key].as_u64().unwrap_or(0)
}

impl ModelBackend for HttpBackend {
    fn provider(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let (v, latency_ms) = self.post("chat/completions", &body)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| self.transport("response has no message content".into()))?
            .to_string();
        Ok(Completion {
            text,
            usage: TokenUsage {
                prompt_tokens: tokens(&v, "prompt_tokens"),
                completion_tokens: tokens(&v, "completion_tokens"),
                latency_ms,
                call_id: String::new(),
            },
        })
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let body = json!({"model": self.config.embedding_model, "input": text});
        let (v, latency_ms) = self.post("embeddings", &body)?;
        let vector: Vec<f64> = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| self.transport("response has no embedding".into()))?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        Ok(Embedding {
            empty: text.trim().is_empty(),
            vector,
            usage: TokenUsage {
                prompt_tokens: tokens(&v, "prompt_tokens"),
                completion_tokens: 0,
                latency_ms,
                call_id: String::new(),
            },
        })
    }
}
