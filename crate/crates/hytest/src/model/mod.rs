//! Domain model types: hybrid automata and block-dataflow simulation models,
//! parsed from JSON documents and fully validated (name resolution, typing,
//! flow completeness).

mod hybrid;
mod sim_model;

pub use hybrid::{parse_hybrid_model, Goal, HybridModel, Mode, Transition, VariableSpec};
pub use sim_model::{
    parse_sim_model, sim_model_to_json, Block, BlockKind, LogicOp, RelOp, SignDir, SimModel,
    TrigFn,
};

use crate::expr::{ParseError, TypeError};
use thiserror::Error;

/// Name reserved for the condition graph's failing node.
pub const FAILING_MODE: &str = "__failing__";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("in {location}: {source}")]
    Expr {
        location: String,
        source: ParseError,
    },
    #[error("in {location}: {source}")]
    Type {
        location: String,
        source: TypeError,
    },
    #[error("{0}")]
    Invalid(String),
}

impl ModelError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ModelError::Invalid(msg.into())
    }
}
