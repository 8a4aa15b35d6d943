//! Exhaustive-scan retrieval index over fixed-size character chunks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{cosine, BackendError, ModelBackend};
use crate::types::{char_slice, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunking {
    pub size: usize,
    pub overlap: usize,
}

impl Default for Chunking {
    fn default() -> Self {
        Chunking { size: 400, overlap: 80 }
    }
}

impl Chunking {
    /// Char ranges of the chunks of a text with `len` chars: one chunk
    /// starts at every multiple of `size - overlap` below `len`.
    pub fn spans(&self, len: usize) -> Vec<(usize, usize)> {
        let stride = self.size.saturating_sub(self.overlap).max(1);
        (0..len)
            .step_by(stride)
            .map(|s| (s, (s + self.size).min(len)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub entity_id: String,
    pub timestamp: i64,
    /// Char offsets into the source text.
    pub span: (usize, usize),
    pub text: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("document {0} is already indexed")]
    DuplicateDoc(String),
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetrievalIndex {
    chunking: Chunking,
    dimension: Option<usize>,
    entries: Vec<Chunk>,
    #[serde(skip)]
    docs: HashSet<String>,
}

impl RetrievalIndex {
    pub fn new(chunking: Chunking) -> Self {
        RetrievalIndex {
            chunking,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.entries
    }

    /// Chunks `doc`, embeds every chunk and appends them. Returns the number
    /// of chunks added.
    pub fn add(&mut self, doc: &Document, backend: &dyn ModelBackend) -> Result<usize, IndexError> {
        if self.docs.contains(&doc.doc_id) {
            return Err(IndexError::DuplicateDoc(doc.doc_id.clone()));
        }
        let len = doc.text.chars().count();
        let mut added = Vec::new();
        for (i, (s, e)) in self.chunking.spans(len).into_iter().enumerate() {
            let text = char_slice(&doc.text, s, e).to_string();
            let emb = backend.embed(&text)?;
            let dim = *self.dimension.get_or_insert(emb.vector.len());
            if emb.vector.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: emb.vector.len(),
                });
            }
            added.push(Chunk {
                chunk_id: format!("{}#{i:04}", doc.doc_id),
                doc_id: doc.doc_id.clone(),
                entity_id: doc.entity_id.clone(),
                timestamp: doc.timestamp,
                span: (s, e),
                text,
                embedding: emb.vector,
            });
        }
        let n = added.len();
        self.entries.extend(added);
        self.docs.insert(doc.doc_id.clone());
        Ok(n)
    }

    /// Highest-cosine chunks for a query vector, score-descending with ties
    /// by chunk id.
    pub fn top_k_vector(&self, query: &[f64], k: usize) -> Vec<(&Chunk, f64)> {
        self.top_k_where(query, k, |_| true)
    }

    pub fn top_k_where<F>(&self, query: &[f64], k: usize, keep: F) -> Vec<(&Chunk, f64)>
    where
        F: Fn(&Chunk) -> bool,
    {
        let mut scored: Vec<(&Chunk, f64)> = self
            .entries
            .iter()
            .filter(|c| keep(c))
            .map(|c| (c, cosine(query, &c.embedding)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.chunk_id.cmp(&b.0.chunk_id)));
        scored.truncate(k);
        scored
    }

    pub fn top_k(
        &self,
        backend: &dyn ModelBackend,
        query: &str,
        k: usize,
    ) -> Result<Vec<(&Chunk, f64)>, BackendError> {
        let q = backend.embed(query)?;
        Ok(self.top_k_vector(&q.vector, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::EchoBackend;

    #[test]
    fn chunk_offsets() {
        let c = Chunking::default();
        assert_eq!(c.spans(1000), vec![(0, 400), (320, 720), (640, 1000), (960, 1000)]);
        assert!(c.spans(0).is_empty());
        assert_eq!(c.spans(10), vec![(0, 10)]);
    }

    #[test]
    fn add_and_duplicate() {
        let mut idx = RetrievalIndex::new(Chunking::default());
        let text: String = (0..200).map(|i| format!("w{i:03} ")).collect();
        let n = idx.add(&Document::new("d1", "e", 0, &text[..1000]), &EchoBackend).unwrap();
        assert_eq!(n, 4);
        assert_eq!(idx.chunks()[3].chunk_id, "d1#0003");
        assert_eq!(idx.add(&Document::new("d0", "e", 0, ""), &EchoBackend).unwrap(), 0);
        let err = idx.add(&Document::new("d1", "e", 0, "x"), &EchoBackend).unwrap_err();
        assert_eq!(err, IndexError::DuplicateDoc("d1".into()));
    }

    #[test]
    fn exact_query_ranks_first() {
        let mut idx = RetrievalIndex::new(Chunking { size: 20, overlap: 0 });
        idx.add(&Document::new("d", "e", 0, "alpha beta gamma dlt epsilon zeta eta"), &EchoBackend)
            .unwrap();
        let q = idx.chunks()[1].text.clone();
        let top = idx.top_k(&EchoBackend, &q, 10).unwrap();
        assert_eq!(top.len(), idx.len());
        assert_eq!(top[0].0.chunk_id, "d#0001");
        assert!((top[0].1 - 1.0).abs() < 1e-12);
    }
}
