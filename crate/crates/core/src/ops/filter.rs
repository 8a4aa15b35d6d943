use super::{affirmative, Decision, OpError};
use crate::backend::prompt::Prompt;
use crate::backend::{cosine, ModelBackend};
use crate::types::Document;

/// Keep/drop decision for one document. Documents with no text are dropped
/// without a model call.
pub fn sem_filter(
    doc: &Document,
    criterion: &str,
    decision: Decision,
    threshold: f64,
    backend: &dyn ModelBackend,
) -> Result<bool, OpError> {
    if doc.text.trim().is_empty() {
        return Ok(false);
    }
    match decision {
        Decision::Llm => {
            let p = Prompt::new("filter")
                .section("instruction", "Answer YES if the document satisfies the criterion, otherwise NO.")
                .section("criterion", criterion)
                .section("document", &doc.text)
                .render();
            Ok(affirmative(&backend.complete(&p)?.text))
        }
        Decision::Embedding => {
            let d = backend.embed(&doc.text)?;
            let c = backend.embed(criterion)?;
            Ok(cosine(&d.vector, &c.vector) >= threshold)
        }
    }
}
