use super::OpError;
use crate::backend::prompt::Prompt;
use crate::backend::ModelBackend;
use crate::index::{Chunking, RetrievalIndex};
use crate::types::Document;

/// Answers `query_doc` from the top `k` passages of `index`. The answer
/// records the retrieved documents, best first, in `rag.retrieved`.
pub fn cont_rag(
    query_doc: &Document,
    index: &RetrievalIndex,
    backend: &dyn ModelBackend,
    k: usize,
    instruction: &str,
) -> Result<Document, OpError> {
    let hits = index.top_k(backend, &query_doc.text, k.max(1))?;
    let mut p = Prompt::new("rag")
        .section("instruction", instruction)
        .section("query", &query_doc.text);
    let mut docs: Vec<&str> = Vec::new();
    let mut chunks: Vec<&str> = Vec::new();
    for (c, _) in &hits {
        p = p.section("passage", &c.text);
        chunks.push(&c.chunk_id);
        if !docs.contains(&c.doc_id.as_str()) {
            docs.push(&c.doc_id);
        }
    }
    let text = backend.complete(&p.render())?.text;
    Ok(Document::new(
        format!("rag:{}", query_doc.doc_id),
        query_doc.entity_id.clone(),
        query_doc.timestamp,
        text,
    )
    .with_attr("rag.retrieved", docs.join(","))
    .with_attr("rag.chunks", chunks.join(",")))
}

/// Continuous RAG: every document is first answered against everything
/// seen before it, then added to the index.
#[derive(Debug, Clone)]
pub struct ContRag {
    pub index: RetrievalIndex,
    pub k: usize,
    pub instruction: String,
}

impl ContRag {
    pub fn new(k: usize, instruction: impl Into<String>, chunking: Chunking) -> Self {
        ContRag {
            index: RetrievalIndex::new(chunking),
            k,
            instruction: instruction.into(),
        }
    }

    pub fn push(&mut self, doc: &Document, backend: &dyn ModelBackend) -> Result<Document, OpError> {
        let answer = cont_rag(doc, &self.index, backend, self.k, &self.instruction)?;
        self.index.add(doc, backend)?;
        Ok(answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SimulatedLlm;

    #[test]
    fn single_doc_index() {
        let mut idx = RetrievalIndex::new(Chunking::default());
        idx.add(&Document::new("a", "e", 0, "Sepsis suspected. Cultures drawn."), &SimulatedLlm)
            .unwrap();
        let q = Document::new("q", "e", 1, "any sepsis?");
        let ans = cont_rag(&q, &idx, &SimulatedLlm, 1, "answer").unwrap();
        assert_eq!(ans.attrs["rag.retrieved"], "a");
        assert_eq!(ans.text, "Sepsis suspected.");
    }

    #[test]
    fn identical_query_ranks_its_doc_first() {
        let mut r = ContRag::new(3, "answer", Chunking::default());
        let texts = ["renal failure", "chest pain", "femur fracture", "asthma attack", "skin rash"];
        for (i, t) in texts.iter().enumerate() {
            r.push(&Document::new(format!("d{i}"), "e", i as i64, *t), &SimulatedLlm).unwrap();
        }
        let ans = r.push(&Document::new("q", "e", 9, "femur fracture"), &SimulatedLlm).unwrap();
        assert!(ans.attrs["rag.retrieved"].starts_with("d2"));
        assert_eq!(ans.attrs["rag.chunks"].split(',').count(), 3);
    }
}
