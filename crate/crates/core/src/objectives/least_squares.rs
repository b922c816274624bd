//! Linear least squares `f(x) = ½‖Ax − b‖²`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::{check_dim, SmoothObjective};
use crate::psd_sketch::HessianOracle;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Dense or CSR design matrix.
#[derive(Debug, Clone)]
pub enum DesignMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            DesignMatrix::Dense(m) => m.nrows(),
            DesignMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DesignMatrix::Dense(m) => m.ncols(),
            DesignMatrix::Sparse(m) => m.ncols(),
        }
    }

    /// Stored entries; `p·d` for dense storage.
    pub fn nnz(&self) -> usize {
        match self {
            DesignMatrix::Dense(m) => m.len(),
            DesignMatrix::Sparse(m) => m.nnz(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DesignMatrix::Dense(m) => m * x,
            DesignMatrix::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DesignMatrix::Dense(m) => m.tr_mul(y),
            DesignMatrix::Sparse(m) => m.tr_mul_vec(y),
        }
    }

    pub fn row_sq_norm(&self, i: usize) -> f64 {
        match self {
            DesignMatrix::Dense(m) => m.row(i).norm_squared(),
            DesignMatrix::Sparse(m) => m.row_sq_norm(i),
        }
    }

    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        match self {
            DesignMatrix::Dense(m) => m.row(i).transpose().dot(x),
            DesignMatrix::Sparse(m) => m.row_dot(i, x),
        }
    }

    /// `x += scale · a_i`.
    pub fn row_axpy(&self, i: usize, scale: f64, x: &mut DVector<f64>) {
        match self {
            DesignMatrix::Dense(m) => {
                for (xj, aij) in x.iter_mut().zip(m.row(i).iter()) {
                    *xj += scale * aij;
                }
            }
            DesignMatrix::Sparse(m) => m.row_axpy(i, scale, x),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DesignMatrix::Dense(m) => m.clone(),
            DesignMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

impl From<DMatrix<f64>> for DesignMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        DesignMatrix::Dense(m)
    }
}

impl From<CsrMatrix> for DesignMatrix {
    fn from(m: CsrMatrix) -> Self {
        DesignMatrix::Sparse(m)
    }
}

#[derive(Debug)]
pub struct LeastSquares {
    matrix: DesignMatrix,
    rhs: DVector<f64>,
    col_sq_norms: DVector<f64>,
    gram: OnceLock<DMatrix<f64>>,
}

impl LeastSquares {
    pub fn new(matrix: impl Into<DesignMatrix>, rhs: DVector<f64>) -> Result<Self> {
        let matrix = matrix.into();
        check_dim("least-squares rhs", matrix.nrows(), rhs.len())?;
        if matrix.ncols() == 0 {
            return Err(Error::InvalidArgument("design matrix has no columns".into()));
        }
        let finite = match &matrix {
            DesignMatrix::Dense(m) => m.iter().all(|v| v.is_finite()),
            DesignMatrix::Sparse(m) => m.triplets().all(|(_, _, v)| v.is_finite()),
        };
        if !finite || rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite least-squares data".into()));
        }
        let mut col_sq_norms = DVector::zeros(matrix.ncols());
        match &matrix {
            DesignMatrix::Dense(m) => {
                for (j, c) in m.column_iter().enumerate() {
                    col_sq_norms[j] = c.norm_squared();
                }
            }
            DesignMatrix::Sparse(m) => {
                for (_, j, v) in m.triplets() {
                    col_sq_norms[j] += v * v;
                }
            }
        }
        Ok(Self {
            matrix,
            rhs,
            col_sq_norms,
            gram: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &DesignMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Ax − b`.
    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("least-squares parameter", self.dim(), x.len())?;
        Ok(self.matrix.mul_vec(x) - &self.rhs)
    }

    /// `AᵀA`, formed on first use and shared by every oracle afterwards.
    ///
    /// The flop ledger still charges each column fetch as `Aᵀ(A e_j)`.
    fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let a = self.matrix.to_dense();
            a.tr_mul(&a)
        })
    }

    fn column_cost(&self) -> u64 {
        let p = self.rows() as u64;
        match &self.matrix {
            DesignMatrix::Dense(_) => 4 * p + 2 * p * self.dim() as u64,
            DesignMatrix::Sparse(m) => 4 * p + 2 * m.nnz() as u64,
        }
    }
}

impl SmoothObjective for LeastSquares {
    fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.matrix.tr_mul_vec(&self.residual(x)?))
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let r = self.residual(x)?;
        Ok((0.5 * r.norm_squared(), self.matrix.tr_mul_vec(&r)))
    }

    fn hessian_oracle(&self, x: &DVector<f64>) -> Result<Box<dyn HessianOracle + '_>> {
        check_dim("least-squares parameter", self.dim(), x.len())?;
        Ok(Box::new(LsHessianOracle {
            gram: self.gram(),
            diag: &self.col_sq_norms,
            column_cost: self.column_cost(),
        }))
    }

    fn hessian_dense(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("least-squares parameter", self.dim(), x.len())?;
        Ok(self.gram().clone())
    }

    fn suggested_lipschitz_hessian(&self, _theta0: &DVector<f64>) -> f64 {
        0.0
    }

    fn grad_cost(&self) -> u64 {
        4 * self.matrix.nnz() as u64
    }

    fn value_cost(&self) -> u64 {
        2 * self.matrix.nnz() as u64 + 2 * self.rows() as u64
    }
}

/// Column access to `AᵀA`; independent of the evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct LsHessianOracle<'a> {
    gram: &'a DMatrix<f64>,
    diag: &'a DVector<f64>,
    column_cost: u64,
}

impl HessianOracle for LsHessianOracle<'_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn diag(&self) -> DVector<f64> {
        self.diag.clone()
    }

    fn column(&self, j: usize) -> Result<DVector<f64>> {
        if j >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: self.dim(),
            });
        }
        Ok(self.gram.column(j).into_owned())
    }

    fn column_cost(&self) -> u64 {
        self.column_cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn diagonal_design_example() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let ls = LeastSquares::new(a, DVector::zeros(2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(ls.value(&x).unwrap(), 2.5);
        assert_eq!(ls.gradient(&x).unwrap(), DVector::from_vec(vec![1.0, 4.0]));
        let h = ls.hessian_oracle(&x).unwrap();
        assert_eq!(h.diag(), DVector::from_vec(vec![1.0, 4.0]));
        assert_eq!(h.column(0).unwrap(), DVector::from_vec(vec![1.0, 0.0]));
        assert!(h.column(2).is_err());
        assert_eq!(ls.grad_cost(), 16);
        assert_eq!(h.column_cost(), 8 + 8);
    }

    #[test]
    fn zero_design_has_zero_gradient() {
        let ls = LeastSquares::new(DMatrix::zeros(3, 2), DVector::from_element(3, 1.0)).unwrap();
        let g = ls.gradient(&DVector::from_vec(vec![5.0, -2.0])).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn oracle_columns_match_gram_and_ignore_the_point() {
        let mut rng = rng::seeded(5);
        let a = DMatrix::from_fn(30, 10, |_, _| crate::rng::gaussian(&mut rng));
        let gram = a.tr_mul(&a);
        let ls = LeastSquares::new(a.clone(), DVector::zeros(30)).unwrap();
        let x1 = DVector::zeros(10);
        let x2 = DVector::from_element(10, 3.0);
        let (h1, h2) = (ls.hessian_oracle(&x1).unwrap(), ls.hessian_oracle(&x2).unwrap());
        for j in 0..10 {
            let c = h1.column(j).unwrap();
            assert_eq!(c, h2.column(j).unwrap());
            let err = (&c - gram.column(j)).norm() / gram.column(j).norm();
            assert!(err < 1e-12);
            assert!((h1.diag()[j] - gram[(j, j)]).abs() <= 1e-12 * gram[(j, j)]);
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let mut rng = rng::seeded(8);
        let a = DMatrix::from_fn(12, 5, |i, j| {
            if (i + j) % 3 == 0 {
                crate::rng::gaussian(&mut rng)
            } else {
                0.0
            }
        });
        let b = DVector::from_fn(12, |i, _| i as f64 * 0.1);
        let dense = LeastSquares::new(a.clone(), b.clone()).unwrap();
        let sparse = LeastSquares::new(CsrMatrix::from_dense(&a), b).unwrap();
        let x = DVector::from_fn(5, |i, _| 1.0 - i as f64);
        assert!((dense.value(&x).unwrap() - sparse.value(&x).unwrap()).abs() < 1e-12);
        let gd = dense.gradient(&x).unwrap();
        assert!((gd - sparse.gradient(&x).unwrap()).norm() < 1e-12);
        assert!(sparse.grad_cost() < dense.grad_cost());
    }
}
