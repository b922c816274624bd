//! Regularized overestimated Newton (RON) with randomized low-rank Hessian
//! sketches.
//!
//! The crate is organised around the pieces of one optimization loop:
//!
//! - [`psd_sketch`]: randomly pivoted Cholesky (RPC) Nyström factors of an
//!   implicit PSD matrix, with a certified trace residual.
//! - [`regularized_newton`]: the RON iteration, its λ schedule, the Woodbury
//!   low-rank solve and per-step lemma diagnostics.
//! - [`objectives`]: the smooth convex objective interface plus the entropic
//!   optimal transport dual and linear least squares.
//! - [`baselines`]: Sinkhorn, gradient descent, randomized Kaczmarz and CGLS.
//! - [`harness`]: data generators, Matrix Market IO, experiment configs,
//!   trace files and reports.
//! - [`checks`]: invariant suites shared by the CLI `check` command and the
//!   test suites.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod checks;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod psd_sketch;
pub mod regularized_newton;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
pub use objectives::{EotDual, LeastSquares, SmoothObjective};
pub use psd_sketch::{rpc_factorize, DenseOracle, HessianOracle, NystromFactor};
pub use regularized_newton::{run_ron, HessianModel, RonConfig, RonRun, StepDiagnostics};
