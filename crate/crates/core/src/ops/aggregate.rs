use super::OpError;
use crate::backend::prompt::Prompt;
use crate::backend::ModelBackend;
use crate::types::Document;

/// Folds a window of documents into one synthetic document.
pub fn sem_aggregate(
    window: &[Document],
    instruction: &str,
    backend: &dyn ModelBackend,
) -> Result<Document, OpError> {
    let (Some(first), Some(last)) = (window.first(), window.last()) else {
        return Err(OpError::EmptyWindow);
    };
    let mut p = Prompt::new("aggregate").section("instruction", instruction);
    for d in window {
        p = p.section("document", &d.text);
    }
    let text = backend.complete(&p.render())?.text;
    let entity = if window.iter().all(|d| d.entity_id == first.entity_id) {
        first.entity_id.clone()
    } else {
        "mixed".to_string()
    };
    let ts = window.iter().map(|d| d.timestamp).max().unwrap_or(0);
    let ids: Vec<&str> = window.iter().map(|d| d.doc_id.as_str()).collect();
    Ok(Document::new(format!("agg:{}..{}", first.doc_id, last.doc_id), entity, ts, text)
        .with_attr("aggregate.docs", ids.join(",")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SimulatedLlm;

    #[test]
    fn concatenates_in_order() {
        let w = vec![
            Document::new("a", "e", 1, "one"),
            Document::new("b", "e", 5, "two"),
            Document::new("c", "f", 3, "three"),
        ];
        let d = sem_aggregate(&w, "concatenate", &SimulatedLlm).unwrap();
        assert_eq!(d.text, "one\ntwo\nthree");
        assert_eq!(d.entity_id, "mixed");
        assert_eq!(d.timestamp, 5);
        let single = sem_aggregate(&w[..1], "concatenate", &SimulatedLlm).unwrap();
        assert_eq!(single.text, "one");
        assert_eq!(single.entity_id, "e");
    }

    #[test]
    fn empty_window_rejected() {
        assert_eq!(sem_aggregate(&[], "x", &SimulatedLlm).unwrap_err(), OpError::EmptyWindow);
    }
}
