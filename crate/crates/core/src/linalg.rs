//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solves `mat * x = rhs` for a symmetric positive definite `mat`.
///
/// Cholesky first; if roundoff makes the factorization fail, falls back to LU
/// with partial pivoting.
pub fn solve_spd(mat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if mat.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            context: "solve_spd",
            expected: mat.nrows(),
            got: rhs.len(),
        });
    }
    if let Some(chol) = mat.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    mat.lu()
        .solve(rhs)
        .ok_or_else(|| Error::Conditioning("singular regularized system".into()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = mat.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Singular values, descending.
pub fn singular_values(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of values strictly above `threshold * max`.
pub fn numerical_rank(values: &[f64], relative_threshold: f64) -> usize {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    values
        .iter()
        .filter(|v| v.abs() > relative_threshold * max)
        .count()
}

pub(crate) fn check_finite(v: &DVector<f64>, what: &'static str, iter: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, iter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_matches_known_solution() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = solve_spd(m.clone(), &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let r = m * &x - DVector::from_vec(vec![1.0, 2.0]);
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn rank_counts_relative_to_max() {
        assert_eq!(numerical_rank(&[1.0, 1e-2, 1e-11], 1e-10), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
    }
}
