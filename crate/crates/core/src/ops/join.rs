use super::{affirmative, Decision, OpError};
use crate::backend::prompt::Prompt;
use crate::backend::{cosine, ModelBackend};
use crate::types::Document;

/// Pairs `left` with every buffered right document judged related.
pub fn sem_join(
    left: &Document,
    right_buffer: &[Document],
    instruction: &str,
    decision: Decision,
    threshold: f64,
    backend: &dyn ModelBackend,
) -> Result<Vec<(Document, Document)>, OpError> {
    if right_buffer.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    match decision {
        Decision::Embedding => {
            let l = backend.embed(&left.text)?;
            for r in right_buffer {
                let e = backend.embed(&r.text)?;
                if cosine(&l.vector, &e.vector) >= threshold {
                    out.push((left.clone(), r.clone()));
                }
            }
        }
        Decision::Llm => {
            for r in right_buffer {
                let p = Prompt::new("join")
                    .section("instruction", instruction)
                    .section("left", &left.text)
                    .section("right", &r.text)
                    .render();
                if affirmative(&backend.complete(&p)?.text) {
                    out.push((left.clone(), r.clone()));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SimulatedLlm;

    #[test]
    fn identical_texts_pair() {
        let l = Document::new("l", "e", 0, "renal failure dialysis");
        let r = vec![Document::new("r", "e", 0, "renal failure dialysis")];
        assert_eq!(sem_join(&l, &r, "", Decision::Embedding, 0.9, &SimulatedLlm).unwrap().len(), 1);
        assert_eq!(sem_join(&l, &r, "", Decision::Llm, 0.9, &SimulatedLlm).unwrap().len(), 1);
    }

    #[test]
    fn orthogonal_and_empty() {
        let l = Document::new("l", "e", 0, "alpha");
        let r = vec![Document::new("r", "e", 0, "omega")];
        assert!(sem_join(&l, &r, "", Decision::Embedding, 0.5, &SimulatedLlm).unwrap().is_empty());
        assert!(sem_join(&l, &[], "", Decision::Embedding, 0.5, &SimulatedLlm).unwrap().is_empty());
    }
}
