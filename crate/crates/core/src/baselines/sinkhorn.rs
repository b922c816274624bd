use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{BaselineRow, BaselineTrace};
use crate::objectives::EotDual;
use crate::{Error, Result};

/// Final scalings of a Sinkhorn run; the plan is `diag(u) W diag(v)`.
#[derive(Debug, Clone)]
pub struct SinkhornScalings {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl SinkhornScalings {
    pub fn plan(&self, kernel: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| {
            self.u[i] * kernel[(i, j)] * self.v[j]
        })
    }
}

/// `target ⊘ sums`, with zero target entries mapped to zero.
fn rescale(target: &DVector<f64>, sums: &DVector<f64>, side: &str) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(target.len());
    for i in 0..target.len() {
        if target[i] == 0.0 {
            continue;
        }
        if !(sums[i] > 0.0) || !sums[i].is_finite() {
            return Err(Error::Infeasible(format!(
                "{side} {i} has marginal {} but its scaled kernel sum is {}",
                target[i], sums[i]
            )));
        }
        out[i] = target[i] / sums[i];
    }
    Ok(out)
}

fn log_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Objective value and gradient of the dual at `(log u, log v)`, computed
/// from the plan so zero scalings stay finite.
fn dual_metrics(problem: &EotDual, s: &SinkhornScalings) -> (f64, DVector<f64>) {
    let w = problem.kernel();
    let (r, c) = (problem.row_marginal(), problem.col_marginal());
    let wv = w * &s.v;
    let row_sums = s.u.component_mul(&wv);
    let wtu = w.tr_mul(&s.u);
    let col_sums = s.v.component_mul(&wtu);
    let mut linear = 0.0;
    for i in 0..r.len() {
        if r[i] > 0.0 {
            linear += r[i] * log_or_neg_inf(s.u[i]);
        }
    }
    for j in 0..c.len() {
        if c[j] > 0.0 {
            linear += c[j] * log_or_neg_inf(s.v[j]);
        }
    }
    let f = row_sums.sum() - linear;
    let g = EotDual::join(&(row_sums - r), &(col_sums - c));
    (f, g)
}

/// Sinkhorn scaling from `u = v = 1` (zero potentials).
///
/// Each iteration sets `u ← r ⊘ (W v)` then `v ← c ⊘ (Wᵀ u)` and is charged
/// `4ab` flops. Stops once the dual gradient norm is at most `tol`.
pub fn sinkhorn_run(
    problem: &EotDual,
    max_iters: usize,
    tol: f64,
) -> Result<(BaselineTrace, SinkhornScalings)> {
    let (a, b) = (problem.rows(), problem.cols());
    let start = Instant::now();
    let mut s = SinkhornScalings {
        u: DVector::from_element(a, 1.0),
        v: DVector::from_element(b, 1.0),
    };
    let mut trace = BaselineTrace::new("sinkhorn", DVector::zeros(a + b));
    let per_iter = 4 * (a * b) as u64;
    let mut flops = 0u64;
    let mut iter = 0usize;
    loop {
        let (f, g) = dual_metrics(problem, &s);
        let grad_norm = g.norm();
        trace.rows.push(BaselineRow {
            iter,
            f_value: f,
            grad_norm,
            step_norm: None,
            flops,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if !grad_norm.is_finite() {
            trace.failure = Some(Error::NonFinite {
                what: "Sinkhorn marginal residual",
                iter,
            });
            break;
        }
        if grad_norm <= tol {
            trace.converged = true;
            break;
        }
        if iter >= max_iters {
            break;
        }
        let step = (|| -> Result<()> {
            s.u = rescale(problem.row_marginal(), &(problem.kernel() * &s.v), "row")?;
            s.v = rescale(problem.col_marginal(), &problem.kernel().tr_mul(&s.u), "column")?;
            Ok(())
        })();
        if let Err(e) = step {
            trace.failure = Some(e);
            break;
        }
        flops += per_iter;
        iter += 1;
    }
    trace.theta = EotDual::join(&s.u.map(log_or_neg_inf), &s.v.map(log_or_neg_inf));
    Ok((trace, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::SmoothObjective;
    use crate::rng;
    use rand::Rng;

    fn random_problem(n: usize, seed: u64) -> EotDual {
        let mut rng = rng::seeded(seed);
        let mut r = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.2);
        let mut c = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.2);
        r /= r.sum();
        c /= c.sum();
        let cost = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        EotDual::new(r, c, &cost, 0.5).unwrap()
    }

    /// Textbook loop written independently of the solver above.
    fn textbook(w: &DMatrix<f64>, r: &DVector<f64>, c: &DVector<f64>, iters: usize) -> DMatrix<f64> {
        let (a, b) = w.shape();
        let mut u = vec![1.0; a];
        let mut v = vec![1.0; b];
        for _ in 0..iters {
            for i in 0..a {
                let s: f64 = (0..b).map(|j| w[(i, j)] * v[j]).sum();
                u[i] = r[i] / s;
            }
            for j in 0..b {
                let s: f64 = (0..a).map(|i| w[(i, j)] * u[i]).sum();
                v[j] = c[j] / s;
            }
        }
        DMatrix::from_fn(a, b, |i, j| u[i] * w[(i, j)] * v[j])
    }

    #[test]
    fn kernel_with_correct_marginals_is_a_fixed_point() {
        let r = DVector::from_vec(vec![0.25, 0.75]);
        let c = DVector::from_vec(vec![0.5, 0.5]);
        let w = &r * c.transpose();
        let p = EotDual::from_kernel(r, c, w).unwrap();
        let (trace, s) = sinkhorn_run(&p, 5, 1e-12).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.rows.len(), 1);
        let (trace, s2) = sinkhorn_run(&p, 1, -1.0).unwrap();
        assert!((s2.u.add_scalar(-1.0)).amax() < 1e-15 && (s2.v.add_scalar(-1.0)).amax() < 1e-15);
        assert!(trace.rows[1].grad_norm <= 1e-12);
        assert_eq!(s.u, DVector::from_element(2, 1.0));
    }

    #[test]
    fn single_cell_converges_in_one_iteration() {
        let one = DVector::from_element(1, 1.0);
        let p = EotDual::from_kernel(one.clone(), one, DMatrix::from_element(1, 1, 0.3)).unwrap();
        let (trace, _) = sinkhorn_run(&p, 10, 1e-14).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.rows.len(), 2);
        assert!((trace.theta[0] + trace.theta[1] + 0.3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn matches_textbook_sinkhorn_and_is_stationary() {
        let p = random_problem(20, 6);
        let (trace, s) = sinkhorn_run(&p, 30, 0.0).unwrap();
        assert_eq!(trace.rows.len(), 31);
        let reference = textbook(p.kernel(), p.row_marginal(), p.col_marginal(), 30);
        let plan = s.plan(p.kernel());
        assert!((&plan - &reference).amax() <= 1e-10 * reference.amax());
        let g = p.gradient(&trace.theta).unwrap();
        let residual = trace.rows.last().unwrap().grad_norm;
        assert!(g.norm() <= 10.0 * residual.max(1e-15));
        for w in trace.rows.windows(2) {
            assert_eq!(w[1].flops - w[0].flops, 4 * 400);
        }
    }

    #[test]
    fn row_sums_match_after_row_update() {
        let p = random_problem(8, 2);
        let (_, s) = sinkhorn_run(&p, 3, 0.0).unwrap();
        let u = rescale(p.row_marginal(), &(p.kernel() * &s.v), "row").unwrap();
        let z = SinkhornScalings { u, v: s.v }.plan(p.kernel());
        let rows = z.column_sum();
        for i in 0..8 {
            assert!((rows[i] - p.row_marginal()[i]).abs() <= 1e-12 * p.row_marginal()[i]);
        }
    }

    #[test]
    fn zero_marginals_and_infeasibility() {
        let r = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![0.5, 0.5]);
        let p = EotDual::new(r.clone(), c.clone(), &DMatrix::zeros(2, 2), 1.0).unwrap();
        let (trace, s) = sinkhorn_run(&p, 50, 1e-12).unwrap();
        assert!(trace.converged, "{:?}", trace.failure);
        assert_eq!(s.plan(p.kernel()).row(0).amax(), 0.0);
        assert!(trace.rows.iter().all(|row| row.f_value.is_finite()));

        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let bad = EotDual::from_kernel(DVector::from_vec(vec![0.5, 0.5]), c, w).unwrap();
        let (trace, _) = sinkhorn_run(&bad, 5, 1e-12).unwrap();
        assert!(matches!(trace.failure, Some(Error::Infeasible(_))));
    }
}
