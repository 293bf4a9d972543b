use alloc::string::String;
use alloc::vec::Vec;

use crate::model::Diagnostic;

/// Errors produced by the clustering engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid instance ({} problem(s))", .0.len())]
    InvalidInstance(Vec<Diagnostic>),
    #[error("invalid clustering: {0}")]
    InvalidClustering(String),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("invalid distance model: {0}")]
    InvalidModel(String),
    #[error("graph is disconnected: unit {0} is unreachable")]
    Disconnected(usize),
    #[error("capacity sum {capacities} does not match weight sum {weights}")]
    CapacityMismatch { capacities: f64, weights: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rounding blocked: no connectivity-preserving choice for units {units:?}")]
    RoundingBlocked { units: Vec<usize> },
    #[error("search space too large: {0} assignments")]
    TooLarge(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
