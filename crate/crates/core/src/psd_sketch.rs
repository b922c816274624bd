//! Randomly pivoted Cholesky (RPC) Nyström sketches of implicit PSD matrices.
//!
//! A [`HessianOracle`] exposes the diagonal and individual columns of a PSD
//! matrix that is never materialized. [`rpc_factorize`] samples up to `k`
//! pivot columns with probability proportional to the current residual
//! diagonal and returns a factor `F` with `F Fᵀ ⪯ H` together with the trace
//! of the residual `H − F Fᵀ`, which bounds its spectral norm.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::rng;
use crate::{Error, Result};

/// Relative size below which the residual diagonal counts as exhausted.
pub const EXACT_RESIDUAL_RTOL: f64 = 1e-14;

/// Negative diagonal entries down to `-NEGATIVE_DIAG_RTOL * max(diag)` are
/// treated as roundoff and clamped to zero.
pub const NEGATIVE_DIAG_RTOL: f64 = 1e-12;

/// Column and diagonal access to an implicit PSD matrix.
///
/// Implementations must be shareable across threads for read-only use so
/// that independent factorizations can run concurrently.
pub trait HessianOracle: Sync {
    fn dim(&self) -> usize;

    /// Diagonal of the matrix.
    fn diag(&self) -> DVector<f64>;

    /// Column `j` of the matrix.
    fn column(&self, j: usize) -> Result<DVector<f64>>;

    /// Flops charged for one call to [`HessianOracle::column`].
    fn column_cost(&self) -> u64;
}

/// Oracle backed by an explicit dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    matrix: DMatrix<f64>,
    column_cost: u64,
}

impl DenseOracle {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument(format!(
                "oracle matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let column_cost = matrix.nrows() as u64;
        Ok(Self {
            matrix,
            column_cost,
        })
    }

    pub fn with_column_cost(mut self, cost: u64) -> Self {
        self.column_cost = cost;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl HessianOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn diag(&self) -> DVector<f64> {
        self.matrix.diagonal()
    }

    fn column(&self, j: usize) -> Result<DVector<f64>> {
        if j >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: self.dim(),
            });
        }
        Ok(self.matrix.column(j).into_owned())
    }

    fn column_cost(&self) -> u64 {
        self.column_cost
    }
}

/// Assembles the full matrix behind an oracle, one column at a time.
pub fn materialize<O: HessianOracle + ?Sized>(oracle: &O) -> Result<DMatrix<f64>> {
    let d = oracle.dim();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        out.set_column(j, &oracle.column(j)?);
    }
    Ok(out)
}

/// Low-rank factor `F` (d × m, m ≤ k) with `H − F Fᵀ ⪰ 0` and its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromFactor {
    pub factor: DMatrix<f64>,
    /// `tr(H − F Fᵀ)`, clamped at zero.
    pub trace_residual: f64,
    /// Sampled column indices, in acceptance order.
    pub pivots: Vec<usize>,
    pub rng_seed: u64,
    /// Column fetches made, including rejected pivots.
    pub columns_fetched: usize,
    /// Flops charged: column fetches plus `2 d m` per projection at column m.
    pub flops: u64,
}

impl NystromFactor {
    fn zero(dim: usize, rng_seed: u64) -> Self {
        Self {
            factor: DMatrix::zeros(dim, 0),
            trace_residual: 0.0,
            pivots: Vec::new(),
            rng_seed,
            columns_fetched: 0,
            flops: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Number of columns actually produced.
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `F Fᵀ` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Flops charged by [`apply_factor`].
    pub fn apply_cost(&self) -> u64 {
        4 * (self.dim() * self.rank()) as u64
    }
}

fn sample_pivot<R: Rng>(weights: &[f64], total: f64, rng: &mut R) -> Option<usize> {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = Some(i);
        if acc > target {
            return Some(i);
        }
    }
    // Rounding in the running sum can leave `target` just above `acc`.
    last_positive
}

/// Rank-`k` randomly pivoted Cholesky factorization of the matrix behind
/// `oracle`, drawing pivots from the stream seeded by `seed`.
///
/// Stops early with a zero residual once the residual diagonal's 1-norm
/// falls to [`EXACT_RESIDUAL_RTOL`] times its initial value. A pivot whose
/// projected diagonal is not positive is discarded (its residual diagonal is
/// zeroed) and another is drawn; two consecutive discards end the
/// factorization with the columns collected so far.
pub fn rpc_factorize<O: HessianOracle + ?Sized>(
    oracle: &O,
    k: usize,
    seed: u64,
) -> Result<NystromFactor> {
    let n = oracle.dim();
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "rank k = {k} must satisfy 1 <= k <= dim = {n}"
        )));
    }
    let raw = oracle.diag();
    if raw.len() != n {
        return Err(Error::DimensionMismatch {
            context: "oracle diagonal",
            expected: n,
            got: raw.len(),
        });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite diagonal entry".into()));
    }
    let max_diag = raw.iter().fold(0.0_f64, |m, &v| m.max(v));
    let floor = -NEGATIVE_DIAG_RTOL * max_diag;
    if let Some((i, v)) = raw.iter().enumerate().find(|(_, &v)| v < floor) {
        return Err(Error::InvalidArgument(format!(
            "diagonal entry {i} = {v:e} is negative; matrix is not PSD"
        )));
    }
    let mut residual: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let initial: f64 = residual.iter().sum();
    if initial == 0.0 {
        return Ok(NystromFactor::zero(n, seed));
    }

    let mut rng = rng::seeded(seed);
    let mut factor = DMatrix::<f64>::zeros(n, k);
    let mut pivots = Vec::with_capacity(k);
    let mut columns_fetched = 0usize;
    let mut flops = 0u64;
    let mut rejections = 0usize;
    let mut exact = false;

    while pivots.len() < k {
        let total: f64 = residual.iter().sum();
        if total <= EXACT_RESIDUAL_RTOL * initial {
            exact = true;
            break;
        }
        let Some(s) = sample_pivot(&residual, total, &mut rng) else {
            exact = true;
            break;
        };
        let m = pivots.len();
        let mut g = oracle.column(s)?;
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                context: "oracle column",
                expected: n,
                got: g.len(),
            });
        }
        columns_fetched += 1;
        flops += oracle.column_cost() + 2 * (n * m) as u64;
        for j in 0..m {
            let coef = factor[(s, j)];
            if coef != 0.0 {
                g.axpy(-coef, &factor.column(j), 1.0);
            }
        }
        let pivot = g[s];
        if !(pivot > 0.0) || !pivot.is_finite() {
            residual[s] = 0.0;
            rejections += 1;
            if rejections >= 2 {
                break;
            }
            continue;
        }
        rejections = 0;
        g /= pivot.sqrt();
        for (r, gi) in residual.iter_mut().zip(g.iter()) {
            *r = (*r - gi * gi).max(0.0);
        }
        factor.set_column(m, &g);
        pivots.push(s);
    }

    let m = pivots.len();
    let factor = factor.columns(0, m).into_owned();
    let remaining: f64 = residual.iter().sum();
    let trace_residual = if exact || remaining <= EXACT_RESIDUAL_RTOL * initial {
        0.0
    } else {
        remaining
    };
    Ok(NystromFactor {
        factor,
        trace_residual,
        pivots,
        rng_seed: seed,
        columns_fetched,
        flops,
    })
}

/// `F (Fᵀ v)` via two skinny products; costs [`NystromFactor::apply_cost`].
pub fn apply_factor(factor: &NystromFactor, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != factor.dim() {
        return Err(Error::DimensionMismatch {
            context: "apply_factor",
            expected: factor.dim(),
            got: v.len(),
        });
    }
    if factor.rank() == 0 {
        return Ok(DVector::zeros(v.len()));
    }
    let coeffs = factor.factor.tr_mul(v);
    Ok(&factor.factor * coeffs)
}

/// Smallest column count `k` for which RPC attains
/// `E tr(H − Ĥ) ≤ (1 + eps) tr(H − ⟦H⟧_r)`, where `eta` is the relative
/// tail `tr(H − ⟦H⟧_r) / tr(H)`.
pub fn rpc_sample_complexity(r: usize, eps: f64, eta: f64) -> Result<usize> {
    if r < 1 {
        return Err(Error::InvalidArgument("target rank r must be >= 1".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    let r = r as f64;
    let log_plus = |x: f64| x.ln().max(0.0);
    let via_eta = r * (1.0 / (eps * eta)).ln();
    let via_rank = r + r * log_plus(2f64.powf(r) / eps);
    let bound = r / eps + via_eta.min(via_rank);
    Ok(bound.ceil().max(1.0) as usize)
}
