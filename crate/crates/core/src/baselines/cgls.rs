use std::time::Instant;

use nalgebra::DVector;

use super::{BaselineRow, BaselineTrace};
use crate::objectives::{LeastSquares, SmoothObjective};
use crate::{Error, Result};

/// Conjugate gradients on the normal equations without forming `AᵀA`.
///
/// Reports `½‖Ax − b‖²` and `‖Aᵀ(Ax − b)‖` per iteration; each iteration is
/// charged `4·nnz(A) + 4p + 6d` flops. Stops once `½‖Ax − b‖² ≤ tol`, after
/// `max_iters` iterations, or when the search direction has zero curvature.
pub fn cgls_run(
    problem: &LeastSquares,
    x0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<BaselineTrace> {
    let d = problem.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "CGLS initial point",
            expected: d,
            got: x0.len(),
        });
    }
    let a = problem.matrix();
    let p_rows = problem.rows() as u64;
    let nnz = a.nnz() as u64;
    let per_iter = 4 * nnz + 4 * p_rows + 6 * d as u64;
    let start = Instant::now();
    let mut trace = BaselineTrace::new("cgls", x0.clone());

    let mut x = x0.clone();
    let mut r = problem.rhs() - a.mul_vec(&x);
    let mut s = a.tr_mul_vec(&r);
    let mut dir = s.clone();
    let mut gamma = s.norm_squared();
    let mut flops = 4 * nnz + p_rows;
    let mut iter = 0usize;
    let mut last_step = None;
    loop {
        let f = 0.5 * r.norm_squared();
        trace.rows.push(BaselineRow {
            iter,
            f_value: f,
            grad_norm: gamma.sqrt(),
            step_norm: last_step,
            flops,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if !f.is_finite() {
            trace.failure = Some(Error::NonFinite {
                what: "least-squares error",
                iter,
            });
            break;
        }
        if f <= tol || gamma == 0.0 {
            trace.converged = true;
            break;
        }
        if iter >= max_iters {
            break;
        }
        let q = a.mul_vec(&dir);
        let curvature = q.norm_squared();
        if !(curvature > 0.0) {
            break;
        }
        let alpha = gamma / curvature;
        x.axpy(alpha, &dir, 1.0);
        r.axpy(-alpha, &q, 1.0);
        last_step = Some(alpha * dir.norm());
        s = a.tr_mul_vec(&r);
        let gamma_next = s.norm_squared();
        let beta = gamma_next / gamma;
        dir = &s + beta * &dir;
        gamma = gamma_next;
        flops += per_iter;
        iter += 1;
    }
    trace.theta = x;
    Ok(trace)
}
