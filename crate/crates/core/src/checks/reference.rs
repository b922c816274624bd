//! Slow, independent reference computations used to validate the fast
//! paths.

use nalgebra::{DMatrix, DVector};

use crate::psd_sketch::EXACT_RESIDUAL_RTOL;
use crate::{Error, Result};

/// Exact expected trace residual of `k`-step randomly pivoted Cholesky on
/// the dense PSD matrix `h`, by enumerating every pivot sequence with its
/// probability. Cost grows like `dᵏ`; meant for tiny instances.
pub fn rpc_expected_trace_residual(h: &DMatrix<f64>, k: usize) -> f64 {
    fn recurse(r: &DMatrix<f64>, steps: usize, initial: f64) -> f64 {
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.max(0.0)).collect();
        let total: f64 = diag.iter().sum();
        if total <= EXACT_RESIDUAL_RTOL * initial {
            return 0.0;
        }
        if steps == 0 {
            return total;
        }
        let mut expected = 0.0;
        for (s, &ds) in diag.iter().enumerate() {
            if ds <= 0.0 {
                continue;
            }
            let col = r.column(s).into_owned();
            let schur = r - &col * col.transpose() / r[(s, s)];
            expected += ds / total * recurse(&schur, steps - 1, initial);
        }
        expected
    }
    let initial: f64 = h.diagonal().iter().map(|v| v.max(0.0)).sum();
    if initial == 0.0 {
        return 0.0;
    }
    recurse(h, k, initial)
}

/// Double-double number `hi + lo`.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        two_sum(s.hi, lo)
    }

    fn add_prod(self, a: f64, b: f64) -> Dd {
        self.add(two_prod(a, b))
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `g − (FFᵀ + λI) x` accumulated in double-double precision.
fn extended_residual(f: &DMatrix<f64>, lambda: f64, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let (d, m) = f.shape();
    let mut t = vec![Dd::default(); m];
    for (j, tj) in t.iter_mut().enumerate() {
        for i in 0..d {
            *tj = tj.add_prod(f[(i, j)], x[i]);
        }
    }
    DVector::from_fn(d, |i, _| {
        let mut acc = Dd { hi: g[i], lo: 0.0 };
        acc = acc.add(two_prod(lambda, x[i]).neg());
        for (j, tj) in t.iter().enumerate() {
            acc = acc.add(two_prod(f[(i, j)], tj.hi).neg());
            acc = acc.add(two_prod(f[(i, j)], tj.lo).neg());
        }
        acc.value()
    })
}

/// Solves `(FFᵀ + λI) x = g` by a dense Cholesky factorization followed by
/// iterative refinement with extended-precision residuals. Accurate to
/// roughly machine precision whenever `cond(FFᵀ + λI) · 1e-16 ≪ 1`.
pub fn refined_regularized_solve(f: &DMatrix<f64>, lambda: f64, g: &DVector<f64>) -> Result<DVector<f64>> {
    let mut a = f * f.transpose();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Conditioning("reference Cholesky failed".into()))?;
    let mut x = chol.solve(g);
    for _ in 0..6 {
        let r = extended_residual(f, lambda, &x, g);
        let dx = chol.solve(&r);
        x += &dx;
        if dx.norm() <= 1e-17 * x.norm() {
            break;
        }
    }
    Ok(x)
}

/// Finite-difference step `1e-6 · (1 + ‖θ‖)`.
pub fn fd_step(theta: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + theta.norm())
}

/// Central differences of a scalar function.
pub fn central_difference_gradient(
    f: &dyn Fn(&DVector<f64>) -> Result<f64>,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = fd_step(theta);
    let mut g = DVector::zeros(theta.len());
    let mut x = theta.clone();
    for i in 0..theta.len() {
        x[i] = theta[i] + h;
        let fp = f(&x)?;
        x[i] = theta[i] - h;
        let fm = f(&x)?;
        x[i] = theta[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central differences of a vector function along coordinate `j`.
pub fn central_difference_column(
    grad: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    theta: &DVector<f64>,
    j: usize,
) -> Result<DVector<f64>> {
    let h = fd_step(theta);
    let mut x = theta.clone();
    x[j] = theta[j] + h;
    let gp = grad(&x)?;
    x[j] = theta[j] - h;
    let gm = grad(&x)?;
    Ok((gp - gm) / (2.0 * h))
}
