//! Sparse matrices for discretized transfer operators.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Which operator a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// Ulam matrix of `T` on the full mesh, row-stochastic:
    /// entry `(i, j) = Leb(cell_i ∩ T^{-1} cell_j) / Leb(cell_i)`.
    Ulam,
    /// First-return operator `R_n` acting on cell averages over `Y`.
    FirstReturn(usize),
    /// Sum of the first-return operators, `R(1)`.
    FirstReturnSum,
    /// Eigenprojector of `R(1)` for the eigenvalue 1.
    Projector,
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    kind: OperatorKind,
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl OperatorMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Entries within a
    /// row are sorted by column and duplicates are summed in input order.
    pub fn from_rows(
        kind: OperatorKind,
        cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for mut row in rows.into_iter() {
            row.sort_by_key(|&(j, _)| j);
            let mut last = None;
            for (j, v) in row {
                if j >= cols {
                    return Err(Error::Range {
                        what: "column",
                        value: j,
                        lo: 0,
                        hi: cols - 1,
                    });
                }
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            kind,
            rows: row_ptr.len() - 1,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(kind: OperatorKind, dense: &[Vec<f64>]) -> Result<Self> {
        let cols = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self::from_rows(kind, cols, rows)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| crate::sum::sum(self.row(i).map(|(_, v)| v)))
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `A x`. Rows are independent, so this parallelizes without changing results.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `x A`, written into `out`.
    pub fn vec_mul_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += xi * self.values[k];
            }
        }
    }

    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.vec_mul_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| {
                let mut r = vec![0.0; self.cols];
                for (j, v) in self.row(i) {
                    r[j] = v;
                }
                r
            })
            .collect()
    }
}

/// Numerical rank of a dense matrix by Gaussian elimination with full pivoting.
pub fn numerical_rank(dense: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = dense.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut col_used = vec![false; cols];
    let mut row_used = vec![false; rows];
    loop {
        let mut best = (0.0, 0, 0);
        for (i, r) in a.iter().enumerate() {
            if row_used[i] {
                continue;
            }
            for (j, &v) in r.iter().enumerate() {
                if !col_used[j] && v.abs() > best.0 {
                    best = (v.abs(), i, j);
                }
            }
        }
        if best.0 <= rel_tol * scale {
            return rank;
        }
        let (_, pi, pj) = best;
        row_used[pi] = true;
        col_used[pj] = true;
        rank += 1;
        let pivot_row = a[pi].clone();
        for (i, r) in a.iter_mut().enumerate() {
            if row_used[i] {
                continue;
            }
            let f = r[pj] / pivot_row[pj];
            for (v, p) in r.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let a = OperatorMatrix::from_dense(
            OperatorKind::Ulam,
            &[vec![0.5, 0.5, 0.0], vec![0.0, 0.25, 0.75]],
        )
        .unwrap();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.mul_vec(&[1.0, 2.0, 4.0]), vec![1.5, 3.5]);
        assert_eq!(a.vec_mul(&[2.0, 4.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(a.row_sums(), vec![1.0, 1.0]);
        assert_eq!(a.get(1, 2), 0.75);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn duplicates_merge() {
        let a = OperatorMatrix::from_rows(OperatorKind::Ulam, 2, vec![vec![(1, 0.25), (0, 0.5), (1, 0.25)]])
            .unwrap();
        assert_eq!(a.to_dense(), vec![vec![0.5, 0.5]]);
        assert!(OperatorMatrix::from_rows(OperatorKind::Ulam, 2, vec![vec![(2, 1.0)]]).is_err());
    }

    #[test]
    fn rank() {
        let outer: Vec<Vec<f64>> = (1..5)
            .map(|i| (1..4).map(|j| (i * j) as f64).collect())
            .collect();
        assert_eq!(numerical_rank(&outer, 1e-12), 1);
        let id: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(numerical_rank(&id, 1e-12), 3);
    }
}
