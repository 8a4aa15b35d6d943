use std::collections::VecDeque;
use std::sync::Mutex;

use super::prompt::Prompt;
use super::{hash_embed, BackendError, Completion, Embedding, ModelBackend, TokenUsage};

fn answer(prompt: &str, text: String) -> Result<Completion, BackendError> {
    Ok(Completion {
        usage: TokenUsage::whitespace(prompt, &text),
        text,
    })
}

/// Returns the prompt unchanged.
#[derive(Debug, Default, Clone)]
pub struct EchoBackend;

impl ModelBackend for EchoBackend {
    fn provider(&self) -> &str {
        "mock-echo"
    }
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        answer(prompt, prompt.to_string())
    }
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(hash_embed(text))
    }
}

/// Ordered `needle -> answer` table. The first needle found
/// (case-insensitive) in the prompt's document section, or in the whole
/// prompt when it has none, decides the answer.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    rules: Vec<(String, String)>,
    default: String,
}

impl RuleBackend {
    pub fn new(default: impl Into<String>) -> Self {
        RuleBackend {
            rules: Vec::new(),
            default: default.into(),
        }
    }

    pub fn rule(mut self, needle: impl Into<String>, answer: impl Into<String>) -> Self {
        self.rules.push((needle.into().to_lowercase(), answer.into()));
        self
    }
}

impl ModelBackend for RuleBackend {
    fn provider(&self) -> &str {
        "mock-rules"
    }
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let parsed = Prompt::parse(prompt);
        let subject = parsed
            .as_ref()
            .and_then(|p| p.get("document"))
            .unwrap_or(prompt)
            .to_lowercase();
        let text = self
            .rules
            .iter()
            .find(|(needle, _)| subject.contains(needle.as_str()))
            .map_or_else(|| self.default.clone(), |(_, a)| a.clone());
        answer(prompt, text)
    }
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(hash_embed(text))
    }
}

/// Replies with a fixed sequence of completions, one per call.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            served: Mutex::new(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl ModelBackend for ScriptedBackend {
    fn provider(&self) -> &str {
        "mock-scripted"
    }
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let next = self.replies.lock().unwrap().pop_front();
        let mut served = self.served.lock().unwrap();
        match next {
            Some(text) => {
                *served += 1;
                answer(prompt, text)
            }
            None => Err(BackendError::ScriptExhausted(*served)),
        }
    }
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(hash_embed(text))
    }
}

type CompleteFn = dyn Fn(&str) -> Result<String, BackendError> + Send + Sync;

/// Completion computed by a closure, with mock accounting.
pub struct FnBackend {
    name: String,
    f: Box<CompleteFn>,
}

impl FnBackend {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        FnBackend {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnBackend").field("name", &self.name).finish()
    }
}

impl ModelBackend for FnBackend {
    fn provider(&self) -> &str {
        &self.name
    }
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let text = (self.f)(prompt)?;
        answer(prompt, text)
    }
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(hash_embed(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_and_accounting() {
        let c = EchoBackend.complete("a b  c").unwrap();
        assert_eq!(c.text, "a b  c");
        assert_eq!(c.usage.prompt_tokens, 3);
        assert_eq!(c.usage.completion_tokens, 3);
    }

    #[test]
    fn rules_answer_first_hit() {
        let b = RuleBackend::new("NO").rule("sepsis", "YES");
        assert_eq!(b.complete("sepsis noted").unwrap().text, "YES");
        assert_eq!(b.complete("stable").unwrap().text, "NO");
    }

    #[test]
    fn rules_look_at_document_section() {
        let b = RuleBackend::new("NO").rule("sepsis", "YES");
        let p = Prompt::new("filter")
            .section("criterion", "mentions sepsis")
            .section("document", "afebrile, stable")
            .render();
        assert_eq!(b.complete(&p).unwrap().text, "NO");
    }

    #[test]
    fn script_runs_out() {
        let b = ScriptedBackend::new(["one"]);
        assert_eq!(b.complete("x").unwrap().text, "one");
        assert_eq!(b.complete("x").unwrap_err(), BackendError::ScriptExhausted(1));
    }
}
