use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("argument {0} is outside the supported domain")]
    Domain(f64),

    #[error("arc elasticity is undefined for c1 = {c1}, c2 = {c2}")]
    DegenerateArc { c1: f64, c2: f64 },

    #[error("market share {0} is outside the open interval (0, 1)")]
    ShareOutOfRange(f64),

    #[error("segment {id}: {reason}")]
    InvalidSegment { id: String, reason: String },

    #[error("infeasible: minimum of the constraint function is {min_constraint} > 0")]
    Infeasible { min_constraint: f64 },

    #[error("unknown segment {0}")]
    UnknownSegment(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("denominator is zero")]
    ZeroDenominator,

    #[error("knapsack instance is infeasible: minimal weight {min_weight} exceeds capacity {capacity}")]
    InfeasibleInstance { min_weight: f64, capacity: f64 },

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model document: {0}")]
    Model(String),
}
