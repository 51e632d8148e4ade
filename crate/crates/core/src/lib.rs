//! Nonlinear restricted additive Schwarz, used as a fixed-point solver and as
//! a nonlinear preconditioner for Newton's method (RASPEN), with its two-level
//! FAS variant and the additive (ASPIN) family for comparison.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coarse;
pub mod decomposition;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod local_solver;
pub mod newton;
pub mod precond;
pub mod problems;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use decomposition::{DecompositionLayout, Geometry, ResidualRestriction, Subdomain};
pub use error::{Error, Result};
pub use local_solver::SolverSettings;
pub use newton::{
    continuation_solve, fixed_point_solve, global_newton, outer_newton, reference_solution,
    relative_l1_error, IterationLedger, IterationRecord, RunResult,
};
pub use precond::{InnerCounts, JacobianMode, PreconditionedSystem, PreconditionerKind};
pub use problems::{AffineProblem, DiffusionProblem2D, ForchheimerProblem1D, NonlinearProblem};
