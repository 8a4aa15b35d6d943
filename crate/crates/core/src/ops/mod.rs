//! Continuous semantic operators over documents.

mod aggregate;
mod filter;
mod groupby;
mod join;
mod map;
mod rag;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::index::IndexError;

pub use aggregate::sem_aggregate;
pub use filter::sem_filter;
pub use groupby::{
    groupby_assign, groupby_refine, parse_plan, Group, GroupBy, GroupState, GroupStrategy, PlanStep,
};
pub use join::sem_join;
pub use map::{sem_map, MAP_ATTR};
pub use rag::{cont_rag, ContRag};
pub use window::{window_boundary, SemWindow, WindowState, WindowStrategy};

/// Default for every similarity threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// How a yes/no semantic decision is made.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Ask the model.
    #[default]
    Llm,
    /// Compare embeddings against a threshold.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("aggregate window is empty")]
    EmptyWindow,
    #[error("refinement plan rejected: {0}")]
    PlanParse(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

fn affirmative(reply: &str) -> bool {
    reply.trim_start().to_ascii_uppercase().starts_with("YES")
}
