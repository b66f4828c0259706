use std::io;

use thiserror::Error;

use crate::addressing::{ItemId, NodeIndex};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity must be at least 1 (got {0})")]
    InvalidCapacity(usize),

    #[error("occupancy must lie strictly between 0 and 1 (got {0})")]
    InvalidOccupancy(f64),

    #[error("item list is empty")]
    NoItems,

    #[error("duplicate item {0}")]
    DuplicateItem(ItemId),

    #[error("unknown item {0}")]
    UnknownItem(ItemId),

    /// The walk along an item's hash path left the occupied tree without
    /// finding it, or a stored item is off its path.
    #[error("corrupted state: item {item} not reachable (walk stopped at node {node})")]
    CorruptedState { item: ItemId, node: NodeIndex },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("tree is in transient overfill; node {0} holds more than capacity")]
    Overfilled(NodeIndex),

    #[error("locality must lie in [0, 0.9] (got {0})")]
    InvalidLocality(f64),

    #[error("invalid trace parameters: {0}")]
    InvalidTraceParams(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("matching inconsistency: {0}")]
    MatchingInconsistency(String),

    #[error("lower bound is zero; competitive ratio undefined")]
    ZeroLowerBound,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sweep cell {cell} failed: {source}")]
    SweepCell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
