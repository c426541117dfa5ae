//! Market-response modelling and marketing budget allocation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: principal-branch Lambert W, including a log-domain
//!   variant for arguments of the form `exp(z)` with large `z`.
//! - [`response`]: the per-segment logit demand curve and its inverse.
//! - [`forecaster`]: the semi-black-box model (shared elasticity network plus
//!   per-segment sensitivity) and the independent-logit baseline.
//! - [`allocator`]: the convex dual bisection solver for budget and ROI
//!   constraints.
//! - [`discrete`]: discrete option sets solved as a multiple-choice knapsack
//!   with the Dyer-Zemel algorithm.
//! - [`simlab`]: synthetic scenarios, Monte-Carlo experiments and brute-force
//!   oracles.

pub mod allocator;
pub mod discrete;
pub mod error;
pub mod forecaster;
pub mod numerics;
pub mod response;
pub mod rng;
pub mod simlab;

pub use allocator::{
    evaluate, solve, AllocationProblem, AllocationSolution, Constraint, Evaluation, ObjectiveTolerance,
    SegmentAllocation, SolverConfig, Termination, TraceStep,
};
pub use discrete::{solve_discrete, DiscreteConfig, DiscreteSolution, Strategy};
pub use error::{Error, Result};
pub use forecaster::{Observation, SemiBlackBoxModel, TrainConfig, TrainingSet};
pub use response::{MarketCost, Segment};
