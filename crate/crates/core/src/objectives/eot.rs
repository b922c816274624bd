//! Negated Kantorovich dual of entropic optimal transport.
//!
//! For marginals `r ∈ Δ_a`, `c ∈ Δ_b`, cost `C` and regularization `ε`, the
//! kernel is `W_ij = exp(−C_ij/ε) r_i c_j` and, with `θ = (α, β)`,
//!
//! ```text
//! f(α, β) = Σ_ij W_ij exp(α_i + β_j) − ⟨r, α⟩ − ⟨c, β⟩.
//! ```
//!
//! `Z_ij = W_ij exp(α_i + β_j)` is the transport plan; ∇f = (Z1 − r, Zᵀ1 − c)
//! and ∇²f = [[diag(Z1), Z], [Zᵀ, diag(Zᵀ1)]], whose rank is at most a + b.

use nalgebra::{DMatrix, DVector};

use super::{check_dim, SmoothObjective};
use crate::psd_sketch::HessianOracle;
use crate::{Error, Result};

/// Exponent slack `s` in the Hessian-Lipschitz heuristic
/// `3 · max W · exp(‖α₀‖∞ + ‖β₀‖∞ + s)`.
pub const LIPSCHITZ_SLACK: f64 = 2.0;

const MARGINAL_SUM_TOL: f64 = 1e-12;

/// Largest argument for which `exp` stays finite.
const EXP_MAX: f64 = 709.0;

#[derive(Debug, Clone)]
pub struct EotDual {
    row_marginal: DVector<f64>,
    col_marginal: DVector<f64>,
    kernel: DMatrix<f64>,
    epsilon: f64,
}

fn validate_marginal(name: &str, m: &DVector<f64>) -> Result<()> {
    if m.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} marginal is empty")));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} marginal has negative or non-finite entries"
        )));
    }
    let sum: f64 = m.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(Error::InvalidArgument(format!(
            "{name} marginal sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl EotDual {
    /// Builds the dual from marginals, an `a × b` cost matrix and `ε > 0`.
    pub fn new(
        row_marginal: DVector<f64>,
        col_marginal: DVector<f64>,
        cost: &DMatrix<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "entropic regularization must be positive, got {epsilon}"
            )));
        }
        check_dim("cost rows", row_marginal.len(), cost.nrows())?;
        check_dim("cost columns", col_marginal.len(), cost.ncols())?;
        if cost.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cost matrix has non-finite entries".into()));
        }
        let kernel = DMatrix::from_fn(cost.nrows(), cost.ncols(), |i, j| {
            (-cost[(i, j)] / epsilon).exp() * row_marginal[i] * col_marginal[j]
        });
        let mut dual = Self::from_kernel(row_marginal, col_marginal, kernel)?;
        dual.epsilon = epsilon;
        Ok(dual)
    }

    /// Builds the dual from an explicit nonnegative kernel `W`.
    pub fn from_kernel(
        row_marginal: DVector<f64>,
        col_marginal: DVector<f64>,
        kernel: DMatrix<f64>,
    ) -> Result<Self> {
        validate_marginal("row", &row_marginal)?;
        validate_marginal("column", &col_marginal)?;
        check_dim("kernel rows", row_marginal.len(), kernel.nrows())?;
        check_dim("kernel columns", col_marginal.len(), kernel.ncols())?;
        if kernel.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "kernel must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            row_marginal,
            col_marginal,
            kernel,
            epsilon: f64::NAN,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_marginal.len()
    }

    pub fn cols(&self) -> usize {
        self.col_marginal.len()
    }

    pub fn row_marginal(&self) -> &DVector<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &DVector<f64> {
        &self.col_marginal
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// NaN when built from an explicit kernel.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Concatenates potentials into a parameter vector.
    pub fn join(alpha: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            alpha.len() + beta.len(),
            alpha.iter().chain(beta.iter()).copied(),
        )
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        check_dim("eot parameter", self.dim(), theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite dual potential".into()));
        }
        Ok(())
    }

    /// Transport plan `Z_ij = W_ij exp(α_i + β_j)`.
    ///
    /// Fails with [`Error::Overflow`] instead of producing infinities.
    pub fn plan(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let a = self.rows();
        let (alpha, beta) = (theta.rows(0, a), theta.rows(a, self.cols()));
        let mut z = DMatrix::zeros(a, self.cols());
        for j in 0..self.cols() {
            for i in 0..a {
                let w = self.kernel[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let s = alpha[i] + beta[j];
                let v = if s < EXP_MAX { w * s.exp() } else { (w.ln() + s).exp() };
                if !v.is_finite() {
                    return Err(Error::Overflow(format!(
                        "W[{i},{j}]·exp(α_{i} + β_{j}) with α_{i} + β_{j} = {s:e} exceeds f64 range"
                    )));
                }
                z[(i, j)] = v;
            }
        }
        Ok(z)
    }

    fn value_from_plan(&self, theta: &DVector<f64>, z: &DMatrix<f64>) -> f64 {
        let a = self.rows();
        let linear = self.row_marginal.dot(&theta.rows(0, a))
            + self.col_marginal.dot(&theta.rows(a, self.cols()));
        z.sum() - linear
    }

    fn gradient_from_plan(&self, z: &DMatrix<f64>) -> DVector<f64> {
        let row_sums = z.column_sum();
        let col_sums = z.row_sum().transpose();
        Self::join(&(row_sums - &self.row_marginal), &(col_sums - &self.col_marginal))
    }

    /// `3 · max W · exp(‖α₀‖∞ + ‖β₀‖∞ + s)` with `s = LIPSCHITZ_SLACK`.
    ///
    /// A heuristic bound on the third-derivative tensor over the level set;
    /// not a certified Lipschitz constant.
    pub fn lipschitz_hessian_heuristic(&self, theta0: &DVector<f64>) -> f64 {
        let a = self.rows();
        let amax = theta0.rows(0, a).amax();
        let bmax = theta0.rows(a, self.cols()).amax();
        3.0 * self.kernel.max() * (amax + bmax + LIPSCHITZ_SLACK).exp()
    }
}

impl SmoothObjective for EotDual {
    fn dim(&self) -> usize {
        self.rows() + self.cols()
    }

    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        let z = self.plan(theta)?;
        Ok(self.value_from_plan(theta, &z))
    }

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self.plan(theta)?;
        Ok(self.gradient_from_plan(&z))
    }

    fn value_and_gradient(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let z = self.plan(theta)?;
        Ok((self.value_from_plan(theta, &z), self.gradient_from_plan(&z)))
    }

    fn hessian_oracle(&self, theta: &DVector<f64>) -> Result<Box<dyn HessianOracle + '_>> {
        Ok(Box::new(EotHessianOracle::new(self.plan(theta)?)))
    }

    fn suggested_lipschitz_hessian(&self, theta0: &DVector<f64>) -> f64 {
        self.lipschitz_hessian_heuristic(theta0)
    }

    fn grad_cost(&self) -> u64 {
        4 * (self.rows() * self.cols()) as u64
    }

    fn value_cost(&self) -> u64 {
        3 * (self.rows() * self.cols()) as u64 + 2 * self.dim() as u64
    }

    fn oracle_cost(&self) -> u64 {
        2 * (self.rows() * self.cols()) as u64
    }
}

/// Hessian oracle of the dual at one point; owns its plan `Z`.
#[derive(Debug, Clone)]
pub struct EotHessianOracle {
    plan: DMatrix<f64>,
    row_sums: DVector<f64>,
    col_sums: DVector<f64>,
}

impl EotHessianOracle {
    pub fn new(plan: DMatrix<f64>) -> Self {
        let row_sums = plan.column_sum();
        let col_sums = plan.row_sum().transpose();
        Self {
            plan,
            row_sums,
            col_sums,
        }
    }

    pub fn plan(&self) -> &DMatrix<f64> {
        &self.plan
    }
}

impl HessianOracle for EotHessianOracle {
    fn dim(&self) -> usize {
        self.plan.nrows() + self.plan.ncols()
    }

    fn diag(&self) -> DVector<f64> {
        EotDual::join(&self.row_sums, &self.col_sums)
    }

    fn column(&self, s: usize) -> Result<DVector<f64>> {
        let a = self.plan.nrows();
        let b = self.plan.ncols();
        if s >= a + b {
            return Err(Error::IndexOutOfRange {
                index: s,
                dim: a + b,
            });
        }
        let mut col = DVector::zeros(a + b);
        if s < a {
            col[s] = self.row_sums[s];
            for j in 0..b {
                col[a + j] = self.plan[(s, j)];
            }
        } else {
            let j = s - a;
            col.rows_mut(0, a).copy_from(&self.plan.column(j));
            col[s] = self.col_sums[j];
        }
        Ok(col)
    }

    fn column_cost(&self) -> u64 {
        2 * self.dim() as u64
    }
}
