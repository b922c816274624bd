use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{BaselineRow, BaselineTrace};
use crate::linalg::check_finite;
use crate::objectives::SmoothObjective;
use crate::regularized_newton::{compute_lambda, damped_gradient_step, default_lambda_floor};
use crate::{Error, Result};

/// Consecutive objective increases after which a run is declared divergent.
pub const DIVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Step `1/L`.
    Fixed { lipschitz: f64 },
    /// Step `1/(L + λ)` with `λ = max(√(L_H‖g‖), floor)`; identical to RON
    /// with the scaled-identity model.
    RonIdentity {
        lipschitz: f64,
        lipschitz_hessian: f64,
        lambda_floor: Option<f64>,
    },
}

impl StepRule {
    fn validate(&self) -> Result<()> {
        let l = match self {
            StepRule::Fixed { lipschitz } | StepRule::RonIdentity { lipschitz, .. } => *lipschitz,
        };
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gradient Lipschitz constant must be positive, got {l}"
            )));
        }
        Ok(())
    }
}

/// Gradient descent from `theta0` until `‖∇f‖ ≤ tol` or `max_iters` steps.
///
/// Aborts with [`Error::Divergence`] (recorded in the trace) once `f` has
/// increased [`DIVERGENCE_STREAK`] times in a row.
pub fn gradient_descent_run<O: SmoothObjective + ?Sized>(
    objective: &O,
    theta0: &DVector<f64>,
    rule: StepRule,
    max_iters: usize,
    tol: f64,
) -> Result<BaselineTrace> {
    rule.validate()?;
    let d = objective.dim();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "gradient descent initial point",
            expected: d,
            got: theta0.len(),
        });
    }
    let start = Instant::now();
    let mut trace = BaselineTrace::new("gradient_descent", theta0.clone());
    let eval_cost = objective.value_cost() + objective.grad_cost();
    let (mut f, mut g) = match objective.value_and_gradient(theta0) {
        Ok(v) => v,
        Err(e) => {
            trace.failure = Some(e);
            return Ok(trace);
        }
    };
    let floor = match rule {
        StepRule::RonIdentity { lambda_floor, .. } => {
            lambda_floor.unwrap_or_else(|| default_lambda_floor(g.norm()))
        }
        StepRule::Fixed { .. } => 0.0,
    };
    let mut theta = theta0.clone();
    let mut flops = eval_cost;
    let mut streak = 0usize;
    let mut iter = 0usize;
    loop {
        let grad_norm = g.norm();
        let mut row = BaselineRow {
            iter,
            f_value: f,
            grad_norm,
            step_norm: None,
            flops,
            wall_time: start.elapsed().as_secs_f64(),
        };
        if grad_norm <= tol {
            trace.converged = true;
            trace.rows.push(row);
            break;
        }
        if iter >= max_iters {
            trace.rows.push(row);
            break;
        }
        let denom = match rule {
            StepRule::Fixed { lipschitz } => lipschitz,
            StepRule::RonIdentity {
                lipschitz,
                lipschitz_hessian,
                ..
            } => lipschitz + compute_lambda(grad_norm, lipschitz_hessian, 0.0, floor),
        };
        let next = damped_gradient_step(&theta, &g, denom);
        let evaluated = objective.value_and_gradient(&next).and_then(|(fv, gv)| {
            if !fv.is_finite() {
                return Err(Error::NonFinite {
                    what: "objective value",
                    iter: iter + 1,
                });
            }
            check_finite(&gv, "gradient", iter + 1)?;
            Ok((fv, gv))
        });
        let (f_next, g_next) = match evaluated {
            Ok(v) => v,
            Err(e) => {
                trace.rows.push(row);
                trace.failure = Some(e);
                break;
            }
        };
        row.step_norm = Some((&next - &theta).norm());
        trace.rows.push(row);
        streak = if f_next > f { streak + 1 } else { 0 };
        flops += 2 * d as u64 + eval_cost;
        theta = next;
        f = f_next;
        g = g_next;
        iter += 1;
        if streak >= DIVERGENCE_STREAK {
            trace.rows.push(BaselineRow {
                iter,
                f_value: f,
                grad_norm: g.norm(),
                step_norm: None,
                flops,
                wall_time: start.elapsed().as_secs_f64(),
            });
            trace.failure = Some(Error::Divergence { iter, streak });
            break;
        }
    }
    trace.theta = theta;
    Ok(trace)
}
