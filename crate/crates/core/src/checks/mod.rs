//! Invariant suites shared by `ronbench check` and the test suites.
//!
//! Every suite returns a [`SuiteReport`]; a failed check names the
//! inequality it tested and the values that broke it.

pub mod reference;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::harness::generators::{consistent_rhs, random_cost, sv_profile_matrix, uniform_marginal, SvProfile};
use crate::linalg::symmetric_eigenvalues;
use crate::objectives::{DesignMatrix, EotDual, LeastSquares, SmoothObjective};
use crate::psd_sketch::{rpc_factorize, rpc_sample_complexity, DenseOracle};
use crate::regularized_newton::{run_ron, woodbury_solve, HessianModel, RonConfig};
use crate::{rng, Error, Result};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<CheckOutcome>) -> Self {
        match r {
            Ok(mut c) => {
                c.name = name.to_string();
                c
            }
            Err(e) => CheckOutcome::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(f, "[{status}] suite {}", self.suite.name())?;
        for c in &self.checks {
            let s = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "  {s} {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Rpc,
    Woodbury,
    FiniteDiff,
    Lemmas,
    Oracle,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Rpc, Suite::Woodbury, Suite::FiniteDiff, Suite::Lemmas, Suite::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Rpc => "rpc",
            Suite::Woodbury => "woodbury",
            Suite::FiniteDiff => "finite-diff",
            Suite::Lemmas => "lemmas",
            Suite::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidArgument(format!("unknown suite '{name}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Knobs for [`run_suite`].
#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub seed: u64,
    /// Multiplies the Hessian Lipschitz constant used by the lemma suite's
    /// EOT run. Values below 1 void the lemma assumptions on purpose.
    pub lipschitz_scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            lipschitz_scale: 1.0,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &CheckOptions) -> SuiteReport {
    let s = opts.seed;
    let checks = match suite {
        Suite::Rpc => vec![
            CheckOutcome::from_result("exact recovery", rpc_exact_recovery(50, 100, 10, 10, s)),
            CheckOutcome::from_result("expected error bound", rpc_error_bound(100, s)),
            CheckOutcome::from_result("underestimation", rpc_underestimation(20, s)),
        ],
        Suite::Woodbury => vec![CheckOutcome::from_result(
            "low-rank solve vs refined dense solve",
            woodbury_equivalence(20, 300, 20, s),
        )],
        Suite::FiniteDiff => finite_difference_checks(20, s),
        Suite::Lemmas => vec![
            CheckOutcome::from_result(
                "least squares 200x50, exact Hessian",
                least_squares_instance(200, 50, &SvProfile::Medium, s).and_then(|ls| {
                    lemma_check(&ls, &DVector::zeros(50), &lemma_config(HessianModel::ExactDense, 0.0, 50, s))
                }),
            ),
            CheckOutcome::from_result(
                "least squares 200x50, rpc k=20",
                least_squares_instance(200, 50, &SvProfile::Fast, s).and_then(|ls| {
                    lemma_check(&ls, &DVector::zeros(50), &lemma_config(HessianModel::Rpc { rank: 20 }, 0.0, 200, s))
                }),
            ),
            CheckOutcome::from_result(
                "eot 50x50, rpc k=100",
                demo_eot(s).and_then(|p| {
                    let theta0 = DVector::zeros(100);
                    let lh = opts.lipschitz_scale * p.suggested_lipschitz_hessian(&theta0);
                    lemma_check(&p, &theta0, &lemma_config(HessianModel::Rpc { rank: 100 }, lh, 100, s))
                }),
            ),
        ],
        Suite::Oracle => vec![CheckOutcome::from_result(
            "rpc at full rank reproduces exact-Hessian iterates",
            oracle_equivalence(s),
        )],
    };
    SuiteReport { suite, checks }
}

fn lemma_config(model: HessianModel, lh: f64, max_iters: usize, seed: u64) -> RonConfig {
    let mut cfg = RonConfig::new(model, lh);
    cfg.max_iters = max_iters;
    cfg.grad_tol = 1e-10;
    cfg.seed = seed;
    cfg
}

/// Random `d × d` PSD matrix of the given rank.
pub fn random_low_rank_psd(d: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    let g = DMatrix::from_fn(d, rank, |_, _| crate::rng::gaussian(&mut r));
    &g * g.transpose()
}

/// RPC with `k ≥ rank` leaves a trace residual of at most `1e-8 · tr(H)`.
pub fn rpc_exact_recovery(trials: usize, d: usize, rank: usize, k: usize, seed: u64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let h = random_low_rank_psd(d, rank, rng::derive_seed(seed, t as u64));
        let oracle = DenseOracle::new(h.clone())?;
        let f = rpc_factorize(&oracle, k, rng::derive_seed(seed ^ 0x5eed, t as u64))?;
        worst = worst.max(f.trace_residual / h.trace());
    }
    Ok(CheckOutcome::new(
        "exact recovery",
        worst <= 1e-8,
        format!("max trace_residual/tr(H) = {worst:.3e} over {trials} trials; need <= 1e-8"),
    ))
}

/// Mean RPC residual on `diag(0.5^i)`, `d = 200`, with `k` from the sample
/// complexity bound for `r = 5`, `eps = 1`, against `1.2 · 2 · tr(H − ⟦H⟧₅)`.
pub fn rpc_error_bound(trials: usize, seed: u64) -> Result<CheckOutcome> {
    let d = 200;
    let diag = DVector::from_fn(d, |i, _| 0.5f64.powi(i as i32));
    let h = DMatrix::from_diagonal(&diag);
    let tail: f64 = diag.iter().skip(5).sum();
    let eta = tail / diag.sum();
    let k = rpc_sample_complexity(5, 1.0, eta)?;
    let oracle = DenseOracle::new(h)?;
    let mut total = 0.0;
    for t in 0..trials {
        total += rpc_factorize(&oracle, k, rng::derive_seed(seed, t as u64))?.trace_residual;
    }
    let mean = total / trials as f64;
    let bound = 1.2 * 2.0 * tail;
    Ok(CheckOutcome::new(
        "expected error bound",
        mean <= bound,
        format!("k = {k}: mean residual {mean:.4e} <= 1.2*(1+eps)*tail = {bound:.4e}"),
    ))
}

/// `λ_min(H − FFᵀ) ≥ −1e−8‖H‖₂` and `‖H − FFᵀ‖₂ ≤ ρ` on small instances.
pub fn rpc_underestimation(trials: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng::seeded(seed);
    for t in 0..trials {
        let d = r.random_range(5..=40);
        let rank = r.random_range(1..=d);
        let k = r.random_range(1..=d);
        let h = random_low_rank_psd(d, rank, rng::derive_seed(seed, t as u64));
        let f = rpc_factorize(&DenseOracle::new(h.clone())?, k, t as u64)?;
        let e = &h - f.to_dense();
        let ev = symmetric_eigenvalues(&e);
        let ev_h = symmetric_eigenvalues(&h);
        let norm_h = ev_h[ev_h.len() - 1];
        let (lo, hi) = (ev[0], ev[ev.len() - 1].max(-ev[0]));
        if lo < -1e-8 * norm_h {
            return Ok(CheckOutcome::new(
                "underestimation",
                false,
                format!("trial {t}: lambda_min(H - FF^T) = {lo:.3e} < -1e-8*|H| = {:.3e}", -1e-8 * norm_h),
            ));
        }
        if hi > f.trace_residual + 1e-8 * norm_h {
            return Ok(CheckOutcome::new(
                "underestimation",
                false,
                format!("trial {t}: |H - FF^T|_2 = {hi:.3e} > trace residual {:.3e}", f.trace_residual),
            ));
        }
    }
    Ok(CheckOutcome::new(
        "underestimation",
        true,
        format!("{trials} trials: H - FF^T PSD and spectrally below the trace residual"),
    ))
}

/// Relative error of the low-rank solve against the refined dense solve.
pub fn woodbury_equivalence(instances: usize, d: usize, m: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let f = DMatrix::from_fn(d, m, |_, _| crate::rng::gaussian(&mut r));
        let g = DVector::from_fn(d, |_, _| crate::rng::gaussian(&mut r));
        let lambda = 10f64.powf(-6.0 * r.random::<f64>());
        let x = woodbury_solve(&f, lambda, &g)?;
        let reference = reference::refined_regularized_solve(&f, lambda, &g)?;
        worst = worst.max((&x - &reference).norm() / reference.norm());
    }
    Ok(CheckOutcome::new(
        "low-rank solve vs refined dense solve",
        worst <= 1e-10,
        format!("max relative error {worst:.3e} over {instances} instances (d = {d}, m = {m}); need <= 1e-10"),
    ))
}

fn random_eot(a: usize, b: usize, eps: f64, seed: u64) -> Result<EotDual> {
    let mut r = rng::seeded(seed);
    let mut rm = DVector::from_fn(a, |_, _| r.random::<f64>() + 0.05);
    let mut cm = DVector::from_fn(b, |_, _| r.random::<f64>() + 0.05);
    rm /= rm.sum();
    cm /= cm.sum();
    EotDual::new(rm, cm, &random_cost(a, b, r.random()), eps)
}

fn gradient_fd_error(obj: &dyn SmoothObjective, theta: &DVector<f64>) -> Result<f64> {
    let g = obj.gradient(theta)?;
    let fd = reference::central_difference_gradient(&|x| obj.value(x), theta)?;
    Ok((&g - &fd).norm() / g.norm().max(f64::MIN_POSITIVE))
}

fn hessian_fd_error(obj: &dyn SmoothObjective, theta: &DVector<f64>) -> Result<f64> {
    let oracle = obj.hessian_oracle(theta)?;
    let mut worst = 0.0f64;
    for j in 0..obj.dim() {
        let col = oracle.column(j)?;
        let fd = reference::central_difference_column(&|x| obj.gradient(x), theta, j)?;
        worst = worst.max((&col - &fd).norm() / col.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Gradients within 1e-5 and Hessian columns within 1e-4 (relative) of
/// central differences on `instances` random EOT and least-squares problems.
pub fn finite_difference_checks(instances: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut r = rng::seeded(seed);
    let mut worst = [0.0f64; 4];
    let mut failure = None;
    for t in 0..instances {
        let run = (|| -> Result<()> {
            let a = r.random_range(2..=12);
            let b = r.random_range(2..=12);
            let eot = random_eot(a, b, 0.2 + r.random::<f64>(), r.random())?;
            let theta = DVector::from_fn(a + b, |_, _| r.random::<f64>() - 0.5);
            worst[0] = worst[0].max(gradient_fd_error(&eot, &theta)?);
            worst[1] = worst[1].max(hessian_fd_error(&eot, &theta)?);

            let p = r.random_range(3..=30);
            let d = r.random_range(1..=p);
            let mut rr = rng::seeded(r.random());
            let m = DMatrix::from_fn(p, d, |_, _| crate::rng::gaussian(&mut rr));
            let rhs = DVector::from_fn(p, |_, _| crate::rng::gaussian(&mut rr));
            let ls = LeastSquares::new(m, rhs)?;
            let x = DVector::from_fn(d, |_, _| crate::rng::gaussian(&mut rr));
            worst[2] = worst[2].max(gradient_fd_error(&ls, &x)?);
            worst[3] = worst[3].max(hessian_fd_error(&ls, &x)?);
            Ok(())
        })();
        if let Err(e) = run {
            failure = Some(format!("instance {t}: {e}"));
            break;
        }
    }
    if let Some(msg) = failure {
        return vec![CheckOutcome::new("finite differences", false, msg)];
    }
    let names = [
        ("eot gradient", 1e-5),
        ("eot hessian columns", 1e-4),
        ("least-squares gradient", 1e-5),
        ("least-squares hessian columns", 1e-4),
    ];
    names
        .iter()
        .zip(worst)
        .map(|(&(name, tol), w)| {
            CheckOutcome::new(
                name,
                w <= tol,
                format!("max relative error {w:.3e} over {instances} instances; need <= {tol:e}"),
            )
        })
        .collect()
}

/// Runs RON with lemma assertions on and reports the first violation.
pub fn lemma_check<O: SmoothObjective + ?Sized>(
    objective: &O,
    theta0: &DVector<f64>,
    cfg: &RonConfig,
) -> Result<CheckOutcome> {
    let mut cfg = cfg.clone();
    cfg.assert_lemmas = true;
    let run = run_ron(objective, theta0, &cfg)?;
    if let (Some(e), true) = (&run.failure, run.violations.is_empty()) {
        return Ok(CheckOutcome::new("lemmas", false, format!("run failed: {e}")));
    }
    let steps = run.iterations();
    let descent_and_stability: Vec<_> = run
        .violations
        .iter()
        .filter(|v| v.lemma != crate::regularized_newton::Lemma::StepBound)
        .collect();
    match descent_and_stability.first().or(run.violations.first().as_ref()) {
        Some(v) => Ok(CheckOutcome::new(
            "lemmas",
            false,
            format!(
                "{} violation(s); first at iteration {}: {} fails with lhs = {:.6e}, rhs = {:.6e}",
                run.violations.len(),
                v.iter,
                v.lemma.describe(),
                v.lhs,
                v.rhs
            ),
        )),
        None => Ok(CheckOutcome::new(
            "lemmas",
            true,
            format!(
                "{steps} steps, final |g| = {:.3e}: descent, stability and step bound hold",
                run.final_grad_norm().unwrap_or(f64::NAN)
            ),
        )),
    }
}

/// Uniform `50 × 50` EOT instance with Unif[0, 1] cost and `ε = 0.05`.
pub fn demo_eot(seed: u64) -> Result<EotDual> {
    let u = uniform_marginal(50)?;
    let cost = random_cost(50, 50, rng::derive_seed(seed, rng::PROBLEM_STREAM));
    EotDual::new(u.clone(), u, &cost, 0.05)
}

/// Uniform `30 × 30` EOT instance with Unif[0, 1] cost and `ε = 0.2`; its
/// Hessian has rank 59 out of 60, so a 60-column sketch is exact.
pub fn local_eot(seed: u64) -> Result<EotDual> {
    let u = uniform_marginal(30)?;
    let cost = random_cost(30, 30, rng::derive_seed(seed, rng::PROBLEM_STREAM));
    EotDual::new(u.clone(), u, &cost, 0.2)
}

/// `p × d` least squares with the given singular-value profile and a
/// consistent right-hand side.
pub fn least_squares_instance(p: usize, d: usize, profile: &SvProfile, seed: u64) -> Result<LeastSquares> {
    let problem_seed = rng::derive_seed(seed, rng::PROBLEM_STREAM);
    let a = DesignMatrix::Dense(sv_profile_matrix(p, d, profile, problem_seed)?);
    let b = consistent_rhs(&a, rng::derive_seed(problem_seed, 1));
    LeastSquares::new(a, b)
}

fn oracle_equivalence(seed: u64) -> Result<CheckOutcome> {
    let u = uniform_marginal(10)?;
    let p = EotDual::new(u.clone(), u, &random_cost(10, 10, seed), 0.2)?;
    let theta0 = DVector::zeros(20);
    let lh = p.suggested_lipschitz_hessian(&theta0);
    let mut exact = RonConfig::new(HessianModel::ExactDense, lh);
    exact.max_iters = 15;
    exact.grad_tol = 0.0;
    let reference = run_ron(&p, &theta0, &exact)?;
    let mut worst = 0.0f64;
    for s in 0..5 {
        let mut cfg = exact.clone();
        cfg.model = HessianModel::Rpc { rank: 20 };
        cfg.seed = rng::derive_seed(seed, s);
        let run = run_ron(&p, &theta0, &cfg)?;
        for (a, b) in reference.trace.iter().zip(&run.trace) {
            worst = worst.max((a.grad_norm - b.grad_norm).abs());
        }
    }
    Ok(CheckOutcome::new(
        "rpc at full rank reproduces exact-Hessian iterates",
        worst <= 1e-8,
        format!("max |g_rpc - g_exact| over 15 iterations and 5 seeds = {worst:.3e}; need <= 1e-8"),
    ))
}
