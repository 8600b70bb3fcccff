//! Coframes, structure functions and classifying Lie algebroids.
//!
//! The symbolic layer ([`symbolic`]) keeps constants exact. Everything that
//! touches numbers (evaluation, Jacobian ranks, path development) is generic
//! over [`Real`]; the aliases below fix `f64`.

pub mod algebroid;
pub mod coframe;
pub mod corpus;
pub mod dsl;
pub mod flow;
pub mod forms;
pub mod linalg;
pub mod realization;
pub mod report;
pub mod scalar;
pub mod symbolic;
pub mod tasks;

pub use scalar::Real;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 1729;

/// `f64` instantiations of the generic numeric types.
pub type Development = flow::Development<f64>;
pub type DevelopedSegment = flow::DevelopedSegment<f64>;
pub type RefinementStep = flow::RefinementStep<f64>;

/// `f32` instantiations, for quick low-precision developments.
pub type Development32 = flow::Development<f32>;
pub type DevelopedSegment32 = flow::DevelopedSegment<f32>;
pub type RefinementStep32 = flow::RefinementStep<f32>;
