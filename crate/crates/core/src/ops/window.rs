use serde::{Deserialize, Serialize};

use super::OpError;
use crate::backend::prompt::Prompt;
use crate::backend::{cosine, ModelBackend};
use crate::types::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStrategy {
    /// Boundary when the document drifts from its predecessor.
    Pairwise,
    /// The model compares the document to a running summary.
    RollingSummary,
    /// Boundary when the document drifts from the open window's centroid.
    EmbedCluster,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowState {
    pub open_window: Vec<Document>,
    pub prev_embedding: Option<Vec<f64>>,
    pub rolling_summary: Option<String>,
    pub centroid: Option<Vec<f64>>,
}

/// Decides whether `doc` starts a new window and updates the strategy's
/// running context. Does not move documents; see [`SemWindow`].
pub fn window_boundary(
    doc: &Document,
    state: &mut WindowState,
    strategy: WindowStrategy,
    backend: &dyn ModelBackend,
    threshold: f64,
) -> Result<bool, OpError> {
    let first = state.open_window.is_empty();
    match strategy {
        WindowStrategy::Pairwise => {
            let v = backend.embed(&doc.text)?.vector;
            let boundary = match &state.prev_embedding {
                Some(prev) if !first => cosine(&v, prev) < threshold,
                _ => false,
            };
            state.prev_embedding = Some(v);
            Ok(boundary)
        }
        WindowStrategy::RollingSummary => {
            let boundary = match state.rolling_summary.as_deref() {
                Some(summary) if !first => {
                    let p = Prompt::new("window")
                        .section("instruction", "Answer CONTINUE if the document continues the topic of the summary, otherwise BOUNDARY.")
                        .section("summary", summary)
                        .section("document", &doc.text)
                        .render();
                    backend.complete(&p)?.text.trim().to_ascii_uppercase().starts_with("BOUNDARY")
                }
                _ => false,
            };
            let prior = if boundary || first { "" } else { state.rolling_summary.as_deref().unwrap_or("") };
            let p = Prompt::new("summarize")
                .section("instruction", "Update the running summary with the new document.")
                .section("summary", prior)
                .section("document", &doc.text)
                .render();
            state.rolling_summary = Some(backend.complete(&p)?.text);
            Ok(boundary)
        }
        WindowStrategy::EmbedCluster => {
            let v = backend.embed(&doc.text)?.vector;
            let boundary = match &state.centroid {
                Some(c) if !first => cosine(&v, c) < threshold,
                _ => false,
            };
            if boundary || first {
                state.centroid = Some(v);
            } else if let Some(c) = state.centroid.as_mut() {
                let n = (state.open_window.len() + 1) as f64;
                for (x, y) in c.iter_mut().zip(&v) {
                    *x += (y - *x) / n;
                }
            }
            Ok(boundary)
        }
    }
}

/// Adaptive segmentation, one window per entity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemWindow {
    pub strategy: WindowStrategy,
    pub threshold: f64,
    pub states: std::collections::BTreeMap<String, WindowState>,
}

impl SemWindow {
    pub fn new(strategy: WindowStrategy, threshold: f64) -> Self {
        SemWindow {
            strategy,
            threshold,
            states: Default::default(),
        }
    }

    /// Adds `doc` to its entity's window; returns the window it closed, if any.
    pub fn push(&mut self, doc: &Document, backend: &dyn ModelBackend) -> Result<Option<Vec<Document>>, OpError> {
        let state = self.states.entry(doc.entity_id.clone()).or_default();
        let boundary = window_boundary(doc, state, self.strategy, backend, self.threshold)?;
        let closed = if boundary {
            Some(std::mem::take(&mut state.open_window))
        } else {
            None
        };
        state.open_window.push(doc.clone());
        Ok(closed)
    }

    /// Closes every open window, in entity order.
    pub fn close_all(&mut self) -> Vec<Vec<Document>> {
        self.states
            .values_mut()
            .map(|s| std::mem::take(&mut s.open_window))
            .filter(|w| !w.is_empty())
            .collect()
    }
}
