//! Compressed sparse row matrices.

use num_traits::Float;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Float> CsrMatrix<T> {
    /// Builds from a row-major dense matrix, keeping nonzero entries only.
    pub fn from_dense(rows: usize, cols: usize, dense: &[T]) -> Self {
        assert_eq!(dense.len(), rows * cols, "dense buffer has wrong length");
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for (c, v) in dense[r * cols..(r + 1) * cols].iter().enumerate() {
                if *v != T::zero() {
                    col_idx.push(c);
                    values.push(*v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { rows, cols, row_ptr, col_idx, values }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                let top = values.len() - 1;
                values[top] = values[top] + v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { rows, cols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows * self.cols];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out[r * self.cols + c] = *v;
            }
        }
        out
    }

    pub fn cast<U: Float>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::from(*v).expect("representable value")).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = (0..self.rows)
            .flat_map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(move |(c, v)| (*c, r, *v))
            })
            .collect();
        Self::from_triplets(self.cols, self.rows, &triplets)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).all(|(c, v)| (*v - self.get(*c, r)).abs() <= tol)
            })
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols.iter().zip(vals).fold(T::zero(), |acc, (c, v)| acc + *v * x[*c]);
        }
    }

    /// `out = self * b` where `b` is row-major with `k` columns.
    pub fn spmm(&self, b: &[T], k: usize, out: &mut [T]) {
        assert_eq!(b.len(), self.cols * k);
        assert_eq!(out.len(), self.rows * k);
        out.fill(T::zero());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let dst = &mut out[r * k..(r + 1) * k];
            for (c, v) in cols.iter().zip(vals) {
                for (d, s) in dst.iter_mut().zip(&b[c * k..(c + 1) * k]) {
                    *d = *d + *v * *s;
                }
            }
        }
    }

    /// `out += self^T * b` where `b` is row-major with `k` columns.
    pub fn spmm_transpose_acc(&self, b: &[T], k: usize, out: &mut [T]) {
        assert_eq!(b.len(), self.rows * k);
        assert_eq!(out.len(), self.cols * k);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let src = &b[r * k..(r + 1) * k];
            for (c, v) in cols.iter().zip(vals) {
                for (d, s) in out[c * k..(c + 1) * k].iter_mut().zip(src) {
                    *d = *d + *v * *s;
                }
            }
        }
    }
}
