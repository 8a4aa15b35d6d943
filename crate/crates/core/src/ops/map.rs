use super::OpError;
use crate::backend::sha256_hex;
use crate::backend::prompt::Prompt;
use crate::backend::ModelBackend;
use crate::types::Document;

/// Attribute recording the hash of the prompt that produced a mapped text.
pub const MAP_ATTR: &str = "sem_map.applied";

/// Replaces the text with the model's rewrite; id, entity and time are kept.
pub fn sem_map(doc: &Document, instruction: &str, backend: &dyn ModelBackend) -> Result<Document, OpError> {
    let p = Prompt::new("map")
        .section("instruction", instruction)
        .section("document", &doc.text)
        .render();
    let text = backend.complete(&p)?.text;
    let mut out = doc.clone();
    out.text = text;
    out.attrs.insert(MAP_ATTR.into(), sha256_hex(instruction));
    Ok(out)
}
