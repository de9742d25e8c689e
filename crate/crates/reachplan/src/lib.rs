//! Reachability-based safe trajectory planning toolkit.
//!
//! The offline half computes a polynomial outer approximation of a Forward
//! Reachable Set (FRS) for a tracked low-fidelity vehicle model by solving a
//! sums-of-squares relaxation of an occupation-measure linear program. The
//! online half intersects that certificate with sensed obstacles to carve out
//! a provably safe set of trajectory parameters, optimizes a cost over it,
//! and falls back to braking when no certified parameter exists.
//!
//! Module map:
//! - [`polyalg`] — sparse multivariate polynomials, Lebesgue box moments
//! - [`vehicle`] — unicycle / Dubins models, tracking controller, error envelope
//! - [`liederiv`] — Lie-derivative operators on polynomial test functions
//! - [`soscompile`] — Putinar quadratic-module constraints compiled to SDP data
//! - [`sdpsolve`] — dense primal-dual interior-point SDP solver
//! - [`frs`] — assembly, solution, and validation of the FRS certificate
//! - [`safeset`] — online obstacle intersection producing the safe-set polynomial
//! - [`planner`] — timing-horizon checks, trajectory optimization, braking
//! - [`simworld`] — closed-loop replanning simulation and the Monte-Carlo harness

pub mod frs;
pub mod liederiv;
pub mod planner;
pub mod polyalg;
pub mod safeset;
pub mod sdpsolve;
pub mod simworld;
pub mod soscompile;
pub mod vehicle;
