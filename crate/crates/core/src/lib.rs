//! Semantic stream processing: continuous LLM-style operators over document
//! streams and temporal pattern detection over the events they extract.

pub mod backend;
pub mod dataflow;
pub mod extract;
pub mod harness;
pub mod index;
pub mod metrics;
pub mod nfa;
pub mod nl;
pub mod ops;
pub mod pattern;
mod text;
pub mod types;

pub use types::{Document, PatternMatch, Record, SemanticEvent};
