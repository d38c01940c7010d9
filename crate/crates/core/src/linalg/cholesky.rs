//! Envelope (skyline) Cholesky factorization under a reverse Cuthill-McKee ordering.
//!
//! Surface meshes at desk scale have envelopes of a few hundred columns after reordering,
//! which keeps the dense-within-envelope factor small and the code simple.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::SparseSymMatrix;
use crate::scalar::Real;

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &SparseSymMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let neighbours = |i: usize| a.row(i).0.iter().copied().filter(move |&j| j != i);
    let degree: Vec<usize> = (0..n).map(|i| neighbours(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    // level structure from `root` over the unvisited part: (depth, deepest level)
    let levels = |root: usize, visited: &[bool]| -> (usize, Vec<usize>) {
        let mut seen = visited.to_vec();
        seen[root] = true;
        let mut frontier = vec![root];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &v in &frontier {
                for w in neighbours(v) {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                return (depth, frontier);
            }
            depth += 1;
            frontier = next;
        }
    };

    for start in 0..n {
        if visited[start] {
            continue;
        }
        // pseudo-peripheral root: hop to a minimum-degree node of the deepest level while the
        // eccentricity keeps growing
        let mut root = start;
        let (mut depth, mut last) = levels(root, &visited);
        for _ in 0..8 {
            let candidate = *last.iter().min_by_key(|&&w| (degree[w], w)).unwrap_or(&root);
            let (d, l) = levels(candidate, &visited);
            if d <= depth {
                break;
            }
            root = candidate;
            depth = d;
            last = l;
        }
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = neighbours(v).filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// `P A P^T = L L^T` with `L` stored row by row inside its envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky<T> {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> EnvelopeCholesky<T> {
    pub fn factor(a: &SparseSymMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0; n];
        for (i, &old) in perm.iter().enumerate() {
            first[i] = a.row(old).0.iter().map(|&j| inv[j]).min().unwrap_or(i).min(i);
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![T::zero(); offset[n]];
        for (i, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let jj = inv[j];
                if jj <= i {
                    data[offset[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let row_i = offset[i];
            for j in first[i]..=i {
                let row_j = offset[j];
                let lo = first[i].max(first[j]);
                let mut acc = data[row_i + j - first[i]];
                for k in lo..j {
                    acc -= data[row_i + k - first[i]] * data[row_j + k - first[j]];
                }
                if j < i {
                    let pivot = data[row_j + j - first[j]];
                    data[row_i + j - first[i]] = acc / pivot;
                } else {
                    if !(acc > T::zero()) {
                        return Err(Error::InvalidInput(format!(
                            "matrix not positive definite (pivot {} at row {i})",
                            acc
                        )));
                    }
                    data[row_i + i - first[i]] = acc.sqrt();
                }
            }
        }
        Ok(Self {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let row = self.offset[i];
            let mut acc = y[i];
            for k in self.first[i]..i {
                acc -= self.data[row + k - self.first[i]] * y[k];
            }
            y[i] = acc / self.data[row + i - self.first[i]];
        }
        for i in (0..n).rev() {
            let row = self.offset[i];
            let yi = y[i] / self.data[row + i - self.first[i]];
            y[i] = yi;
            for k in self.first[i]..i {
                let l = self.data[row + k - self.first[i]];
                y[k] -= l * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
