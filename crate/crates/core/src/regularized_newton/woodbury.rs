//! Low-rank-plus-identity solves `(FFᵀ + λI) x = g`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solves `(FFᵀ + λI) x = g` through the `m × m` system
/// `(λI_m + FᵀF) y = Fᵀg`, then `x = (g − F y) / λ`.
pub fn woodbury_solve(factor: &DMatrix<f64>, lambda: f64, g: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Capacitance::new(factor, lambda, g.len())?.solve(factor, g))
}

/// Ratio `tr(FᵀF)/λ` above which [`woodbury_solve_refined`] refines.
/// The plain formula loses about `ε · tr(FᵀF)/λ` relative accuracy.
pub const REFINE_AMPLIFICATION: f64 = 1e6;

const MAX_REFINEMENTS: usize = 4;

/// [`woodbury_solve`] followed, when `λ` is tiny next to `FᵀF`, by
/// iterative refinement that reuses the `m × m` factorization. Returns the
/// solution and the number of refinement steps taken.
pub fn woodbury_solve_refined(
    factor: &DMatrix<f64>,
    lambda: f64,
    g: &DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let cap = Capacitance::new(factor, lambda, g.len())?;
    let mut x = cap.solve(factor, g);
    if cap.gram_trace / lambda <= REFINE_AMPLIFICATION {
        return Ok((x, 0));
    }
    let residual = |x: &DVector<f64>| g - factor * factor.tr_mul(x) - lambda * x;
    let mut r = residual(&x);
    let mut steps = 0;
    while steps < MAX_REFINEMENTS {
        let floor = 4.0 * f64::EPSILON * ((cap.gram_trace + lambda) * x.norm() + g.norm());
        if r.norm() <= floor {
            break;
        }
        let candidate = &x + cap.solve(factor, &r);
        let r_next = residual(&candidate);
        steps += 1;
        if r_next.norm() >= r.norm() {
            break;
        }
        let contracted = r_next.norm() <= 0.5 * r.norm();
        x = candidate;
        r = r_next;
        if !contracted {
            break;
        }
    }
    Ok((x, steps))
}

/// Cholesky factor of `λI_m + FᵀF`.
struct Capacitance {
    chol: Option<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>>,
    lambda: f64,
    gram_trace: f64,
}

impl Capacitance {
    fn new(factor: &DMatrix<f64>, lambda: f64, d: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization must be positive and finite, got {lambda}"
            )));
        }
        if factor.nrows() != d {
            return Err(Error::DimensionMismatch {
                context: "woodbury_solve",
                expected: factor.nrows(),
                got: d,
            });
        }
        let m = factor.ncols();
        if m == 0 {
            return Ok(Self {
                chol: None,
                lambda,
                gram_trace: 0.0,
            });
        }
        let mut small = factor.tr_mul(factor);
        let gram_trace = small.trace();
        for i in 0..m {
            small[(i, i)] += lambda;
        }
        let chol = small.cholesky().ok_or_else(|| {
            Error::Conditioning(format!(
                "Cholesky of the {m}x{m} capacitance matrix failed (lambda = {lambda:e})"
            ))
        })?;
        Ok(Self {
            chol: Some(chol),
            lambda,
            gram_trace,
        })
    }

    fn solve(&self, factor: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
        let Some(chol) = &self.chol else {
            return g / self.lambda;
        };
        let y = chol.solve(&factor.tr_mul(g));
        let mut x = g - factor * y;
        x /= self.lambda;
        x
    }
}

/// Flop charge of [`woodbury_solve`] for a `d × m` factor:
/// `2dm²` (Gram) + `2dm` (Fᵀg) + `⅔m³` (Cholesky) + `2dm` (F y).
pub fn woodbury_flops(d: usize, m: usize) -> u64 {
    let (d, m) = (d as u64, m as u64);
    2 * d * m * m + 2 * d * m + (2 * m * m * m) / 3 + 2 * d * m
}

/// Flop charge of one refinement step: residual `4dm + 3d`, correction
/// solve `4dm + 2m² + d`, update `d`.
pub fn woodbury_refine_flops(d: usize, m: usize) -> u64 {
    let (d, m) = (d as u64, m as u64);
    8 * d * m + 2 * m * m + 5 * d
}

/// Flop charge of a dense `d × d` symmetric solve: `⅔d³ + 2d²`.
pub fn dense_solve_flops(d: usize) -> u64 {
    let d = d as u64;
    (2 * d * d * d) / 3 + 2 * d * d
}
