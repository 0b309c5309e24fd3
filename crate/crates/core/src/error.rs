use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, TampaError>;

#[derive(Debug, Error)]
pub enum TampaError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("edge ({0}, {1}) is not in the graph")]
    MissingEdge(NodeId, NodeId),

    #[error("split ratio {0} is outside the admissible range")]
    InvalidRatio(f64),

    #[error("pmf supports differ: c_max {0} vs {1}")]
    SupportMismatch(usize, usize),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("action {action} is not feasible from {state} in slot {slot}")]
    InfeasibleAction {
        state: NodeId,
        action: NodeId,
        slot: usize,
    },

    #[error("planning window [{start}, {end}] extends past the horizon {horizon}")]
    WindowOutOfRange { start: u32, end: u32, horizon: u32 },

    #[error("edge sets differ between prior snapshot and current estimates")]
    EdgeSetMismatch,

    #[error("dkw threshold needs at least one sample")]
    NoSamples,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("validation failed at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl TampaError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        TampaError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Input problems (bad scenario, bad config) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            TampaError::Validation { .. } | TampaError::Parse { .. } | TampaError::InvalidPmf(_)
        )
    }
}
