use std::time::Instant;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::{BaselineRow, BaselineTrace};
use crate::objectives::{LeastSquares, SmoothObjective};
use crate::{rng, Error, Result};

/// Randomized Kaczmarz with rows sampled proportionally to `‖a_i‖²`.
///
/// One epoch is `d` projections, charged `4d` flops each; a trace row is
/// reported after every epoch. Stops once `½‖Ax − b‖² ≤ tol` at an epoch
/// boundary or after `max_epochs` epochs.
pub fn randomized_kaczmarz_run(
    problem: &LeastSquares,
    x0: &DVector<f64>,
    max_epochs: usize,
    tol: f64,
    seed: u64,
) -> Result<BaselineTrace> {
    let d = problem.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "Kaczmarz initial point",
            expected: d,
            got: x0.len(),
        });
    }
    let a = problem.matrix();
    let b = problem.rhs();
    let norms: Vec<f64> = (0..a.nrows()).map(|i| a.row_sq_norm(i)).collect();
    let sampler = WeightedIndex::new(&norms)
        .map_err(|_| Error::InvalidArgument("design matrix has no nonzero row".into()))?;
    let mut rng = rng::seeded(seed);
    let start = Instant::now();
    let mut trace = BaselineTrace::new("kaczmarz", x0.clone());
    let mut x = x0.clone();
    let mut flops = 0u64;
    let mut epoch = 0usize;
    let mut previous = x.clone();
    loop {
        let (f, g) = problem.value_and_gradient(&x)?;
        trace.rows.push(BaselineRow {
            iter: epoch,
            f_value: f,
            grad_norm: g.norm(),
            step_norm: (epoch > 0).then(|| (&x - &previous).norm()),
            flops,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if !f.is_finite() {
            trace.failure = Some(Error::NonFinite {
                what: "least-squares error",
                iter: epoch,
            });
            break;
        }
        if f <= tol {
            trace.converged = true;
            break;
        }
        if epoch >= max_epochs {
            break;
        }
        previous.copy_from(&x);
        for _ in 0..d {
            let i = sampler.sample(&mut rng);
            let scale = (b[i] - a.row_dot(i, &x)) / norms[i];
            a.row_axpy(i, scale, &mut x);
        }
        flops += 4 * (d * d) as u64;
        epoch += 1;
    }
    trace.theta = x;
    Ok(trace)
}
