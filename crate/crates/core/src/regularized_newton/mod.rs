//! Regularized overestimated Newton (RON).
//!
//! Each iteration solves `(B + λI) Δ = ∇f(θ)` and steps `θ ← θ − Δ`, where
//! `B` is a PSD overestimate of the Hessian and `λ = ρ + √(L_H‖∇f‖)`. Three
//! overestimates are available, see [`HessianModel`].

mod woodbury;

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{check_finite, solve_spd};
use crate::objectives::SmoothObjective;
use crate::psd_sketch::{materialize, rpc_factorize};
use crate::{rng, Error, Result};

pub use woodbury::{
    dense_solve_flops, woodbury_flops, woodbury_refine_flops, woodbury_solve, woodbury_solve_refined,
    REFINE_AMPLIFICATION,
};

/// Absolute slack in the lemma checks, scaled by `1 + |f|` or used as a
/// relative factor `1 + slack`.
pub const LEMMA_SLACK: f64 = 1e-8;

/// Hessian overestimate used by [`ron_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HessianModel {
    /// `FFᵀ + ρI` from a rank-`rank` randomly pivoted Cholesky factor.
    Rpc { rank: usize },
    /// The exact Hessian (globally regularized Newton).
    ExactDense,
    /// `L·I`; RON reduces to gradient descent with step `1/(L + λ)`.
    ScaledIdentity { lipschitz: f64 },
}

impl HessianModel {
    pub fn label(&self) -> String {
        match self {
            HessianModel::Rpc { rank } => format!("rpc(k={rank})"),
            HessianModel::ExactDense => "exact_dense".into(),
            HessianModel::ScaledIdentity { lipschitz } => format!("scaled_identity(L={lipschitz})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RonConfig {
    pub model: HessianModel,
    /// Hessian Lipschitz constant `L_H`; 0 for quadratics.
    pub lipschitz_hessian: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Also stop once `f(θ) ≤ value_tol`.
    pub value_tol: Option<f64>,
    /// Lower bound on λ; `None` means [`default_lambda_floor`] of `‖∇f(θ₀)‖`.
    pub lambda_floor: Option<f64>,
    pub assert_lemmas: bool,
    pub seed: u64,
}

impl RonConfig {
    pub fn new(model: HessianModel, lipschitz_hessian: f64) -> Self {
        Self {
            model,
            lipschitz_hessian,
            max_iters: 100,
            grad_tol: 1e-8,
            value_tol: None,
            lambda_floor: None,
            assert_lemmas: true,
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lipschitz_hessian >= 0.0) || !self.lipschitz_hessian.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Hessian Lipschitz constant must be finite and >= 0, got {}",
                self.lipschitz_hessian
            )));
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return Err(Error::InvalidArgument("gradient tolerance must be >= 0".into()));
        }
        if let Some(floor) = self.lambda_floor {
            if !(floor >= 0.0) || !floor.is_finite() {
                return Err(Error::InvalidArgument("lambda floor must be finite and >= 0".into()));
            }
        }
        match self.model {
            HessianModel::Rpc { rank } if rank < 1 || rank > dim => Err(Error::InvalidArgument(
                format!("sketch rank {rank} must lie in 1..={dim}"),
            )),
            HessianModel::ScaledIdentity { lipschitz } if !(lipschitz > 0.0) || !lipschitz.is_finite() => {
                Err(Error::InvalidArgument(format!(
                    "identity scale must be positive, got {lipschitz}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// `max(ρ + √(L_H‖g‖), floor)`.
pub fn compute_lambda(grad_norm: f64, lipschitz_hessian: f64, rho: f64, floor: f64) -> f64 {
    (rho + (lipschitz_hessian * grad_norm).sqrt()).max(floor)
}

/// `1e-12 · (1 + ‖∇f(θ₀)‖)`.
pub fn default_lambda_floor(initial_grad_norm: f64) -> f64 {
    1e-12 * (1.0 + initial_grad_norm)
}

/// One row of a RON trace.
///
/// Row `n` describes the iterate `θ_n` and the step taken from it. The last
/// row of a run has no step: its step and descent fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    /// `√(L_H‖∇f(θ_n)‖)`.
    pub lambda_sqrt: f64,
    /// Trace residual of the sketch; 0 for the exact model, `L` for the
    /// scaled identity.
    pub rho: f64,
    /// Total regularization in the solve.
    pub lambda: f64,
    pub sketch_rank: usize,
    pub step_norm: Option<f64>,
    /// `f(θ_n) − f(θ_{n+1})`.
    pub descent_lhs: Option<f64>,
    /// `½(λ_sqrt + ρ) r_n²`.
    pub descent_rhs: Option<f64>,
    /// Cumulative flops spent to reach `θ_n` and evaluate `f`, `∇f` there.
    pub flops: u64,
    pub wall_time: f64,
}

/// The inequality a step failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// `f_n − f_{n+1} ≥ ½(λ_sqrt + ρ) r_n² − slack·(1 + |f_n|)`.
    Descent,
    /// `‖∇f_{n+1}‖ ≤ 1.5 · λ · r_n · (1 + slack)`.
    Stability,
    /// `L_H r_n ≤ λ_sqrt² / (λ_sqrt + ρ) · (1 + slack)`.
    StepBound,
}

impl Lemma {
    pub fn describe(&self) -> &'static str {
        match self {
            Lemma::Descent => "descent: f_n - f_{n+1} >= 0.5*(lambda_sqrt + rho)*r_n^2 - 1e-8*(1+|f_n|)",
            Lemma::Stability => "stability: |g_{n+1}| <= 1.5*lambda*r_n*(1+1e-8)",
            Lemma::StepBound => "step bound: L_H*r_n <= lambda_sqrt^2/(lambda_sqrt + rho)*(1+1e-8)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaViolation {
    pub iter: usize,
    pub lemma: Lemma,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one call to [`ron_step`].
#[derive(Debug, Clone)]
pub struct RonStep {
    pub theta_next: DVector<f64>,
    pub lambda_sqrt: f64,
    pub rho: f64,
    /// Regularization actually added to the model in the solve.
    pub lambda: f64,
    pub sketch_rank: usize,
    pub step_norm: f64,
    /// Flops of the step itself, excluding evaluation at `theta_next`.
    pub flops: u64,
}

/// `θ − g / (L + λ)`; shared with the gradient-descent baseline so the two
/// agree bitwise.
pub(crate) fn damped_gradient_step(theta: &DVector<f64>, grad: &DVector<f64>, denom: f64) -> DVector<f64> {
    theta.zip_map(grad, |t, g| t - g / denom)
}

/// One RON step from `theta` with gradient `grad`.
///
/// `iter` selects the sketching stream `rng::stream(config.seed, iter)`.
pub fn ron_step<O: SmoothObjective + ?Sized>(
    objective: &O,
    theta: &DVector<f64>,
    grad: &DVector<f64>,
    config: &RonConfig,
    lambda_floor: f64,
    iter: usize,
) -> Result<RonStep> {
    let d = objective.dim();
    if theta.len() != d || grad.len() != d {
        return Err(Error::DimensionMismatch {
            context: "ron_step",
            expected: d,
            got: theta.len().min(grad.len()),
        });
    }
    let grad_norm = grad.norm();
    let lambda_sqrt = (config.lipschitz_hessian * grad_norm).sqrt();
    if grad_norm == 0.0 {
        return Ok(RonStep {
            theta_next: theta.clone(),
            lambda_sqrt,
            rho: 0.0,
            lambda: lambda_floor,
            sketch_rank: 0,
            step_norm: 0.0,
            flops: 0,
        });
    }
    let (direction, rho, lambda, rank, flops) = match config.model {
        HessianModel::Rpc { rank } => {
            let oracle = objective.hessian_oracle(theta)?;
            let factor = rpc_factorize(oracle.as_ref(), rank, rng::derive_seed(config.seed, iter as u64))?;
            let rho = factor.trace_residual;
            let lambda = compute_lambda(grad_norm, config.lipschitz_hessian, rho, lambda_floor);
            let (dir, refinements) = woodbury_solve_refined(&factor.factor, lambda, grad)?;
            let flops = objective.oracle_cost()
                + factor.flops
                + woodbury_flops(d, factor.rank())
                + refinements as u64 * woodbury_refine_flops(d, factor.rank());
            (dir, rho, lambda, factor.rank(), flops)
        }
        HessianModel::ExactDense => {
            let oracle = objective.hessian_oracle(theta)?;
            let fetch = objective.oracle_cost() + d as u64 * oracle.column_cost();
            let mut h = materialize(oracle.as_ref())?;
            let lambda = compute_lambda(grad_norm, config.lipschitz_hessian, 0.0, lambda_floor);
            for i in 0..d {
                h[(i, i)] += lambda;
            }
            let dir = solve_spd(h, grad)?;
            (dir, 0.0, lambda, d, fetch + dense_solve_flops(d))
        }
        HessianModel::ScaledIdentity { lipschitz } => {
            let lam = compute_lambda(grad_norm, config.lipschitz_hessian, 0.0, lambda_floor);
            let denom = lipschitz + lam;
            let theta_next = damped_gradient_step(theta, grad, denom);
            let step_norm = (&theta_next - theta).norm();
            return Ok(RonStep {
                theta_next,
                lambda_sqrt,
                rho: lipschitz,
                lambda: denom,
                sketch_rank: 0,
                step_norm,
                flops: 2 * d as u64,
            });
        }
    };
    check_finite(&direction, "Newton direction", iter)?;
    let step_norm = direction.norm();
    Ok(RonStep {
        theta_next: theta - direction,
        lambda_sqrt,
        rho,
        lambda,
        sketch_rank: rank,
        step_norm,
        flops: flops + d as u64,
    })
}

/// Result of [`run_ron`].
#[derive(Debug)]
pub struct RonRun {
    pub theta: DVector<f64>,
    pub trace: Vec<StepDiagnostics>,
    pub violations: Vec<LemmaViolation>,
    /// Error that stopped the run early; the trace covers the iterations
    /// completed before it.
    pub failure: Option<Error>,
    pub converged: bool,
    pub lambda_floor: f64,
    pub config: RonConfig,
}

impl RonRun {
    pub fn final_grad_norm(&self) -> Option<f64> {
        self.trace.last().map(|r| r.grad_norm)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Checks the per-step inequalities for the step from row `row` to a point
/// with value `f_next` and gradient norm `g_next`.
pub fn check_lemmas(
    row: &StepDiagnostics,
    step: &RonStep,
    lipschitz_hessian: f64,
    f_next: f64,
    g_next: f64,
) -> Vec<LemmaViolation> {
    let mut out = Vec::new();
    let r = step.step_norm;
    let descent_lhs = row.f_value - f_next;
    let descent_rhs = 0.5 * (step.lambda_sqrt + step.rho) * r * r;
    let slack = LEMMA_SLACK * (1.0 + row.f_value.abs());
    if !(descent_lhs >= descent_rhs - slack) {
        out.push(LemmaViolation {
            iter: row.iter,
            lemma: Lemma::Descent,
            lhs: descent_lhs,
            rhs: descent_rhs - slack,
        });
    }
    let stab_rhs = 1.5 * step.lambda * r * (1.0 + LEMMA_SLACK);
    if !(g_next <= stab_rhs) && !(r == 0.0 && g_next == row.grad_norm) {
        out.push(LemmaViolation {
            iter: row.iter,
            lemma: Lemma::Stability,
            lhs: g_next,
            rhs: stab_rhs,
        });
    }
    if lipschitz_hessian > 0.0 && r > 0.0 {
        let denom = step.lambda_sqrt + step.rho;
        let bound_lhs = lipschitz_hessian * r;
        let bound_rhs = if denom > 0.0 {
            step.lambda_sqrt * step.lambda_sqrt / denom * (1.0 + LEMMA_SLACK)
        } else {
            0.0
        };
        if !(bound_lhs <= bound_rhs) {
            out.push(LemmaViolation {
                iter: row.iter,
                lemma: Lemma::StepBound,
                lhs: bound_lhs,
                rhs: bound_rhs,
            });
        }
    }
    out
}

fn should_stop(config: &RonConfig, f: f64, grad_norm: f64) -> bool {
    grad_norm <= config.grad_tol || config.value_tol.is_some_and(|tol| f <= tol)
}

/// Runs RON from `theta0` until the gradient (or value) tolerance is met or
/// `max_iters` steps have been taken.
///
/// Invalid configurations are returned as errors; failures during the run
/// end it early and are stored in [`RonRun::failure`].
pub fn run_ron<O: SmoothObjective + ?Sized>(
    objective: &O,
    theta0: &DVector<f64>,
    config: &RonConfig,
) -> Result<RonRun> {
    let d = objective.dim();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "run_ron initial point",
            expected: d,
            got: theta0.len(),
        });
    }
    config.validate(d)?;
    let start = Instant::now();
    let mut run = RonRun {
        theta: theta0.clone(),
        trace: Vec::new(),
        violations: Vec::new(),
        failure: None,
        converged: false,
        lambda_floor: config.lambda_floor.unwrap_or(f64::NAN),
        config: config.clone(),
    };
    let eval_cost = objective.value_cost() + objective.grad_cost();
    let (mut f, mut g) = match evaluate(objective, theta0, 0) {
        Ok(v) => v,
        Err(e) => {
            run.failure = Some(e);
            return Ok(run);
        }
    };
    let floor = config.lambda_floor.unwrap_or_else(|| default_lambda_floor(g.norm()));
    run.lambda_floor = floor;
    let mut flops = eval_cost;
    let mut theta = theta0.clone();
    let mut iter = 0usize;
    loop {
        let grad_norm = g.norm();
        let mut row = StepDiagnostics {
            iter,
            f_value: f,
            grad_norm,
            lambda_sqrt: (config.lipschitz_hessian * grad_norm).sqrt(),
            rho: 0.0,
            lambda: 0.0,
            sketch_rank: 0,
            step_norm: None,
            descent_lhs: None,
            descent_rhs: None,
            flops,
            wall_time: start.elapsed().as_secs_f64(),
        };
        if should_stop(config, f, grad_norm) {
            run.converged = true;
            run.trace.push(row);
            break;
        }
        if iter >= config.max_iters {
            run.trace.push(row);
            break;
        }
        let step = match ron_step(objective, &theta, &g, config, floor, iter) {
            Ok(s) => s,
            Err(e) => {
                run.trace.push(row);
                run.failure = Some(e);
                break;
            }
        };
        let (f_next, g_next) = match evaluate(objective, &step.theta_next, iter + 1) {
            Ok(v) => v,
            Err(e) => {
                // An overflowing trial point has value +inf, so the step broke descent.
                if config.assert_lemmas && matches!(e, Error::Overflow(_)) {
                    let slack = LEMMA_SLACK * (1.0 + f.abs());
                    run.violations.push(LemmaViolation {
                        iter,
                        lemma: Lemma::Descent,
                        lhs: f64::NEG_INFINITY,
                        rhs: 0.5 * (step.lambda_sqrt + step.rho) * step.step_norm.powi(2) - slack,
                    });
                }
                run.trace.push(row);
                run.failure = Some(e);
                break;
            }
        };
        row.rho = step.rho;
        row.lambda = step.lambda;
        row.sketch_rank = step.sketch_rank;
        row.step_norm = Some(step.step_norm);
        row.descent_lhs = Some(f - f_next);
        row.descent_rhs = Some(0.5 * (step.lambda_sqrt + step.rho) * step.step_norm.powi(2));
        if config.assert_lemmas {
            run.violations.extend(check_lemmas(
                &row,
                &step,
                config.lipschitz_hessian,
                f_next,
                g_next.norm(),
            ));
        }
        run.trace.push(row);
        flops += step.flops + eval_cost;
        theta = step.theta_next;
        f = f_next;
        g = g_next;
        iter += 1;
    }
    run.theta = theta;
    Ok(run)
}

fn evaluate<O: SmoothObjective + ?Sized>(
    objective: &O,
    theta: &DVector<f64>,
    iter: usize,
) -> Result<(f64, DVector<f64>)> {
    let (f, g) = objective.value_and_gradient(theta)?;
    if !f.is_finite() {
        return Err(Error::NonFinite {
            what: "objective value",
            iter,
        });
    }
    check_finite(&g, "gradient", iter)?;
    Ok((f, g))
}
