//! Dense primal-dual interior-point solver for small-to-medium block SDPs.
//!
//! The problem form and solver are documented in [`problem`] and [`solver`];
//! [`dense`] holds the blocked Cholesky kernels and [`nt`] the
//! Nesterov–Todd scaling.

pub mod dense;
pub mod nt;
pub mod problem;
pub mod solver;

pub use problem::{ProblemError, SdpProblem, SdpProblemBuilder};
pub use solver::{solve, IterLog, SdpSolution, SdpStatus, SolveOptions};
