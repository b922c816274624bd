//! Reference solvers: Sinkhorn, gradient descent, randomized Kaczmarz and
//! CGLS.
//!
//! Each produces a [`BaselineTrace`] on the same flop axis as RON. Quantities
//! that are only reported (objective value, gradient norm) are not charged.

mod cgls;
mod gradient_descent;
mod kaczmarz;
mod sinkhorn;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::Error;

pub use cgls::cgls_run;
pub use gradient_descent::{gradient_descent_run, StepRule, DIVERGENCE_STREAK};
pub use kaczmarz::randomized_kaczmarz_run;
pub use sinkhorn::{sinkhorn_run, SinkhornScalings};

/// One reported point of a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub iter: usize,
    /// Objective value; `½‖Ax − b‖²` for least-squares solvers.
    pub f_value: f64,
    pub grad_norm: f64,
    pub step_norm: Option<f64>,
    pub flops: u64,
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct BaselineTrace {
    pub solver: String,
    pub rows: Vec<BaselineRow>,
    /// Final iterate (potentials `(log u, log v)` for Sinkhorn).
    pub theta: DVector<f64>,
    pub converged: bool,
    pub failure: Option<Error>,
}

impl BaselineTrace {
    fn new(solver: &str, theta: DVector<f64>) -> Self {
        Self {
            solver: solver.to_string(),
            rows: Vec::new(),
            theta,
            converged: false,
            failure: None,
        }
    }

    pub fn final_row(&self) -> Option<&BaselineRow> {
        self.rows.last()
    }
}
