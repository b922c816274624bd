//! Compressed sparse row matrices, just enough for least squares.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols} matrix"
                )));
            }
        }
        sorted.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets).expect("indices come from the matrix")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |p| (i, self.indices[p], self.values[p]))
        })
    }

    pub fn row_sq_norm(&self, i: usize) -> f64 {
        self.values[self.indptr[i]..self.indptr[i + 1]]
            .iter()
            .map(|v| v * v)
            .sum()
    }

    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        (self.indptr[i]..self.indptr[i + 1])
            .map(|p| self.values[p] * x[self.indices[p]])
            .sum()
    }

    /// x += scale · row i
    pub fn row_axpy(&self, i: usize, scale: f64, x: &mut DVector<f64>) {
        for p in self.indptr[i]..self.indptr[i + 1] {
            x[self.indices[p]] += scale * self.values[p];
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| self.row_dot(i, x))
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            if y[i] != 0.0 {
                self.row_axpy(i, y[i], &mut out);
            }
        }
        out
    }

    /// Dense copy of column `j`.
    pub fn column(&self, j: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        for (i, c, v) in self.triplets() {
            if c == j {
                out[i] = v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let dense = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, -1.0]);
        let csr = CsrMatrix::from_dense(&dense);
        assert_eq!(csr.nnz(), 4);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(csr.mul_vec(&x), &dense * &x);
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        assert_eq!(csr.tr_mul_vec(&y), dense.tr_mul(&y));
        assert_eq!(csr.column(1), dense.column(1).into_owned());
        assert_eq!(csr.to_dense(), dense);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense()[(0, 0)], 3.0);
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }
}
