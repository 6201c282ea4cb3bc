//! Worker assignment and load allocation for multi-master MDS coded
//! computing on heterogeneous workers, with a seeded Monte Carlo evaluator.

// Negated float comparisons are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod dedicated;
pub mod error;
pub mod io;
pub mod lambertw;
pub mod model;
pub mod nlp;
pub mod sca;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MatrixF64 = model::Matrix<f64>;
pub type ProblemInstanceF64 = model::ProblemInstance<f64>;
pub type AssignmentF64 = model::Assignment<f64>;
pub type LoadAllocationF64 = model::LoadAllocation<f64>;
pub type ScheduleF64 = model::Schedule<f64>;

pub type MatrixF32 = model::Matrix<f32>;
pub type ProblemInstanceF32 = model::ProblemInstance<f32>;
pub type AssignmentF32 = model::Assignment<f32>;
pub type LoadAllocationF32 = model::LoadAllocation<f32>;
pub type ScheduleF32 = model::Schedule<f32>;
