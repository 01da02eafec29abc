use thiserror::Error;

use crate::gpro::{EdgeId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} has no active outgoing edge with positive weight")]
    NoActiveOutEdge { node: NodeId },

    #[error("singular system: the policy is improper (target unreachable from some node)")]
    Singular,

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("merged chain is reducible: node {node} is not mutually reachable with the target")]
    Reducible { node: NodeId },

    #[error("decomposition is degenerate: neither the target nor node {w} is reachable from node {u}")]
    Degenerate { u: NodeId, w: NodeId },

    #[error("malformed instance: {0}")]
    Malformed(String),

    #[error("instance fails validation: {0}")]
    Invalid(String),

    #[error("infeasible policy: {0}")]
    InfeasiblePolicy(String),

    #[error("edge {edge} is not free")]
    NotFree { edge: EdgeId },

    #[error("objective moved the wrong way at iteration {iteration}: {before} -> {after}")]
    NonMonotone {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("enumeration refused: {free} free edges exceed the cap of {cap} ({count} policies)")]
    TooManyPolicies { free: usize, cap: usize, count: f64 },

    #[error("no convergence within {cap} iterations (last change {change:e})")]
    NoConvergence { cap: usize, change: f64 },

    #[error("policy {policy}: {source}")]
    PolicyEvaluation {
        policy: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("generator failed: {0}")]
    Generator(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
