//! Compressed sparse row storage for integer-count adjacency matrices.

use serde::{Deserialize, Serialize};

/// Sparse matrix of non-negative integer counts in CSR layout.
///
/// Column indices within a row are strictly increasing and every stored
/// value is non-zero, so two matrices holding the same entries compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<u64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, count)` triplets. Repeated coordinates
    /// accumulate; zero counts are dropped. Callers validate bounds.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, u64)]) -> Self {
        let mut sorted: Vec<(usize, usize, u64)> =
            triplets.iter().copied().filter(|t| t.2 > 0).collect();
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<u64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0,
        }
    }

    /// Entries in row-major order as `(row, col, count)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.ncols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            sums[c] += v;
        }
        sums
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    /// Same sparsity pattern with every count set to one.
    pub fn binarized(&self) -> CsrMatrix {
        CsrMatrix {
            values: vec![1; self.values.len()],
            ..self.clone()
        }
    }

    /// Gustavson row-by-row product `self · rhs` with exact integer counts.
    /// Returns `None` on `u64` overflow.
    pub fn matmul(&self, rhs: &CsrMatrix) -> Option<CsrMatrix> {
        assert_eq!(self.ncols, rhs.nrows, "inner dimensions must agree");
        let mut acc = vec![0u64; rhs.ncols];
        let mut seen = vec![false; rhs.ncols];
        let mut touched: Vec<usize> = Vec::new();

        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    let prod = a.checked_mul(b)?;
                    acc[c] = acc[c].checked_add(prod)?;
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(acc[c]);
                acc[c] = 0;
                seen[c] = false;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        Some(CsrMatrix {
            nrows: self.nrows,
            ncols: rhs.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Dense row-major copy, mostly for tests and small oracles.
    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut dense = vec![vec![0u64; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            dense[r][c] = v;
        }
        dense
    }

    /// Copy with the listed `(row, col)` entries removed entirely.
    pub fn without_entries(&self, drop: &std::collections::HashSet<(usize, usize)>) -> CsrMatrix {
        let kept: Vec<_> = self
            .iter()
            .filter(|&(r, c, _)| !drop.contains(&(r, c)))
            .collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_accumulate() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1), (0, 1, 1), (1, 2, 3), (1, 0, 0)]);
        assert_eq!(m.get(0, 1), 2);
        assert_eq!(m.get(1, 2), 3);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.total(), 5);
    }

    #[test]
    fn matmul_against_dense() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1), (0, 2, 2), (1, 1, 3)]);
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 1, 4), (1, 0, 5), (2, 0, 1), (2, 1, 1)]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_dense(), vec![vec![2, 6], vec![15, 0]]);
    }

    #[test]
    fn matmul_overflow_is_reported() {
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, u64::MAX)]);
        let b = CsrMatrix::from_triplets(1, 1, &[(0, 0, 2)]);
        assert!(a.matmul(&b).is_none());
    }

    #[test]
    fn transpose_swaps_sums() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1), (0, 2, 2), (1, 1, 3)]);
        let t = a.transpose();
        assert_eq!(t.row_sums(), a.col_sums());
        assert_eq!(t.transpose(), a);
    }
}
