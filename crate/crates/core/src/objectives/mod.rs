//! Smooth convex objectives with value, gradient and Hessian-oracle access.

mod eot;
mod least_squares;

use nalgebra::{DMatrix, DVector};

use crate::psd_sketch::{materialize, HessianOracle};
use crate::Result;

pub use eot::{EotDual, EotHessianOracle, LIPSCHITZ_SLACK};
pub use least_squares::{DesignMatrix, LeastSquares, LsHessianOracle};

/// A twice-differentiable convex function on ℝᵈ.
///
/// Implementations are immutable after construction and shared read-only
/// between concurrent runs. Flop charges feed the cost ledger used for
/// error-vs-flops comparisons.
pub trait SmoothObjective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;

    fn value_and_gradient(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.value(theta)?, self.gradient(theta)?))
    }

    /// Column/diagonal access to ∇²f(θ).
    fn hessian_oracle(&self, theta: &DVector<f64>) -> Result<Box<dyn HessianOracle + '_>>;

    /// Dense ∇²f(θ); meant for small instances.
    fn hessian_dense(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        materialize(self.hessian_oracle(theta)?.as_ref())
    }

    /// A Hessian Lipschitz constant to use when starting from `theta0`.
    fn suggested_lipschitz_hessian(&self, theta0: &DVector<f64>) -> f64;

    fn grad_cost(&self) -> u64;

    fn value_cost(&self) -> u64;

    /// Flops charged once per [`SmoothObjective::hessian_oracle`] call.
    fn oracle_cost(&self) -> u64 {
        0
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(crate::Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
