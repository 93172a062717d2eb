use alloc::string::String;

use crate::graph::EdgeId;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("edge ({}, {}) is not present in the graph", .0.u, .0.v)]
    MissingEdge(EdgeId),

    #[error("edge ({}, {}) is not a player of this game", .0.u, .0.v)]
    NotAPlayer(EdgeId),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("could only place {placed} of {requested} random edges")]
    TooDense { requested: usize, placed: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("node {0} has no candidate edges")]
    NoCandidates(usize),

    #[error("{players} players exceed the limit of {limit}")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = core::result::Result<T, Error>;
