use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Symmetric sparse matrix in CSR layout with sorted column indices.
///
/// Both triangles are stored. Off-diagonal values are accumulated once on the upper triangle
/// and mirrored, so `a[i][j]` and `a[j][i]` are the same bits.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSymMatrix<T> {
    /// Builds a matrix from `(row, col, value)` contributions. Entries below the diagonal are
    /// folded onto the upper triangle; duplicates are summed in input order, so the result is
    /// a deterministic function of the triplet sequence.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut upper: Vec<(usize, usize, T)> = triplets
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        // stable sort keeps the summation order of duplicates equal to the input order
        upper.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(upper.len());
        for (i, j, v) in upper {
            assert!(i < dim && j < dim, "triplet ({i}, {j}) outside dimension {dim}");
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
        for &(i, j, v) in &merged {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self {
            dim: diag.len(),
            row_ptr: (0..=diag.len()).collect(),
            col_idx: (0..diag.len()).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |k| vals[k])
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(i, j, _)| i == j)
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn mul_dvector(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    /// `A X` for a dense block of column vectors.
    pub fn mul_block(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.dim);
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.dim {
                let (cols, vals) = self.row(i);
                out[(i, c)] = cols.iter().zip(vals).map(|(&j, &v)| v * col[j]).sum();
            }
        }
        out
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| *a * *b).sum()
    }

    /// `self + alpha * other`, merged over the union of both patterns.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(
            self.dim,
            self.entries()
                .filter(|(i, j, _)| i <= j)
                .chain(
                    other
                        .entries()
                        .filter(|(i, j, _)| i <= j)
                        .map(|(i, j, v)| (i, j, alpha * v)),
                ),
        )
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            out[(i, j)] = v;
        }
        out
    }

    /// Symmetric coordinate text: a header line, `dim dim count`, then the lower triangle as
    /// `i j value` with 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "%%MatrixMarket-compatible symmetric coordinate real")?;
        let lower: Vec<(usize, usize, T)> = self.entries().filter(|(i, j, _)| j <= i).collect();
        writeln!(out, "{} {} {}", self.dim, self.dim, lower.len())?;
        for (i, j, v) in lower {
            writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}
