//! Compressed sparse row matrices for feature propagation.
//!
//! Values are stored in f64; multiplication against a dense matrix is
//! generic over the element type and accumulates in that type, so training
//! paths run 32-bit arithmetic while construction stays 64-bit.

use ndarray::{Array2, ArrayView2};

use crate::model::scalar::Scalar;

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Duplicate entries are summed;
    /// columns are sorted within each row.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) out of range for n={n}");
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c, v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.iter().all(|(r, c, v)| {
            self.row(c)
                .find(|&(cc, _)| cc == r)
                .is_some_and(|(_, vt)| (vt - v).abs() <= tol)
        })
    }

    /// `self · x`, accumulating in the element type of `x`.
    pub fn matmul<F: Scalar>(&self, x: &ArrayView2<F>) -> Array2<F> {
        assert_eq!(x.nrows(), self.n, "matmul: row count mismatch");
        let d = x.ncols();
        let mut out = Array2::<F>::zeros((self.n, d));
        for r in 0..self.n {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                let w = F::from_f64(v);
                let x_row = x.row(c);
                for j in 0..d {
                    out_row[j] = out_row[j] + w * x_row[j];
                }
            }
        }
        out
    }

    /// `selfᵀ · x`.
    pub fn matmul_transpose<F: Scalar>(&self, x: &ArrayView2<F>) -> Array2<F> {
        assert_eq!(x.nrows(), self.n, "matmul_transpose: row count mismatch");
        let d = x.ncols();
        let mut out = Array2::<F>::zeros((self.n, d));
        for r in 0..self.n {
            let x_row = x.row(r);
            for (c, v) in self.row(r) {
                let w = F::from_f64(v);
                let mut out_row = out.row_mut(c);
                for j in 0..d {
                    out_row[j] = out_row[j] + w * x_row[j];
                }
            }
        }
        out
    }

    /// Dense copy, for oracles and small-graph checks.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (r, c, v) in self.iter() {
            out[[r, c]] += v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_dedupe_and_sort() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 2, 1.0), (0, 1, 2.0), (0, 2, 0.5)]);
        let row: Vec<_> = m.row(0).collect();
        assert_eq!(row, vec![(1, 2.0), (2, 1.5)]);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]);
        let x = array![[1.0f64, 0.0], [0.0, 1.0]];
        let y = m.matmul(&x.view());
        assert_eq!(y, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn transpose_multiply_agrees_with_dense_transpose() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 1, 2.0), (2, 0, 3.0), (1, 1, 1.0)]);
        let x = array![[1.0f64], [2.0], [3.0]];
        let yt = m.matmul_transpose(&x.view());
        let dense_t = m.to_dense().t().dot(&x);
        assert_eq!(yt, dense_t);
    }
}
