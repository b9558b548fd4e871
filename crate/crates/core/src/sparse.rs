//! Compressed sparse row storage.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// Sparse matrix in CSR layout with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// The result only depends on the multiset of triplets per position and
    /// their order of appearance, so identical inputs give identical bits.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, keeping insertion order inside each row.
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            let slot = fill[r];
            cols[slot] = c;
            vals[slot] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(lo..hi);
            // Stable sort keeps summation order deterministic.
            order.sort_by_key(|&k| cols[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(cols[k]) {
                    let end = values.len() - 1;
                    values[end] += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = Some(cols[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Zero matrix with the structural pattern given by per-row column sets.
    pub fn with_pattern(nrows: usize, ncols: usize, rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            let mut cols = r.clone();
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self { nrows, ncols, row_ptr, col_idx, values: vec![T::zero(); nnz] }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, n, &triplets)
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

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Position of `(r, c)` in the value array, if structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.position(r, c).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` at a structurally present entry. Panics if absent.
    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: T) {
        let k = self
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                acc += *v * x[*c];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᴴ A y`.
    pub fn quad_form(&self, x: &[T], y: &[T]) -> T {
        let ay = self.mul_vec(y);
        crate::scalar::dot(x, &ay)
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for r in 0..self.nrows.min(self.ncols) {
            t += self.get(r, r);
        }
        t
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Returns `A + s B` for matrices of equal shape.
    pub fn add_scaled(&self, s: T, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (c, v) = self.row(r);
            triplets.extend(c.iter().zip(v).map(|(c, v)| (r, *c, *v)));
        }
        for r in 0..other.nrows {
            let (c, v) = other.row(r);
            triplets.extend(c.iter().zip(v).map(|(c, v)| (r, *c, s * *v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// Maximum of `|A - Aᴴ|` over stored entries, relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let t = self.get(*c, r).conj();
                worst = worst.max((*v - t).abs());
            }
        }
        worst / scale
    }

    /// Dense copy, row-major. Intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                row[*c] = *v;
            }
        }
        d
    }

    /// Real matrix promoted to another scalar field.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Maps each full degree of freedom to at most one reduced column with a
/// coefficient: `u_full = P u_reduced`.
///
/// Selection, periodic tying, rigid-region tying and Bloch phase relations
/// all have this form.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    ncols: usize,
    entries: Vec<Option<(usize, T)>>,
}

impl<T: Scalar> Projection<T> {
    pub fn new(ncols: usize, entries: Vec<Option<(usize, T)>>) -> Self {
        debug_assert!(entries.iter().flatten().all(|(c, _)| *c < ncols));
        Self { ncols, entries }
    }

    /// Number of full degrees of freedom.
    pub fn nfull(&self) -> usize {
        self.entries.len()
    }

    /// Number of reduced (free) degrees of freedom.
    pub fn nfree(&self) -> usize {
        self.ncols
    }

    pub fn entry(&self, dof: usize) -> Option<(usize, T)> {
        self.entries[dof]
    }

    pub fn entries(&self) -> &[Option<(usize, T)>] {
        &self.entries
    }

    /// `P x`.
    pub fn expand(&self, reduced: &[T]) -> Vec<T> {
        assert_eq!(reduced.len(), self.ncols);
        self.entries
            .iter()
            .map(|e| e.map_or(T::zero(), |(c, w)| w * reduced[c]))
            .collect()
    }

    /// `Pᴴ x`.
    pub fn restrict(&self, full: &[T]) -> Vec<T> {
        assert_eq!(full.len(), self.entries.len());
        let mut out = vec![T::zero(); self.ncols];
        for (e, v) in self.entries.iter().zip(full) {
            if let Some((c, w)) = e {
                out[*c] += w.conj() * *v;
            }
        }
        out
    }

    /// `Pᴴ A P`.
    pub fn reduce(&self, a: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(a.nrows(), self.entries.len());
        let mut triplets = Vec::with_capacity(a.nnz());
        for r in 0..a.nrows() {
            let Some((i, wi)) = self.entries[r] else { continue };
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if let Some((j, wj)) = self.entries[*c] {
                    triplets.push((i, j, wi.conj() * *v * wj));
                }
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.ncols, &triplets)
    }

    /// Same map with coefficients promoted to another field.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Projection<U> {
        Projection {
            ncols: self.ncols,
            entries: self.entries.iter().map(|e| e.map(|(c, w)| (c, f(w)))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 5.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![9.0, 2.0]);
    }

    #[test]
    fn projection_reduce_matches_dense_product() {
        // dof 0 prescribed, dofs 1 and 3 tied, dof 2 free.
        let p = Projection::new(2, vec![None, Some((0, 1.0)), Some((1, 1.0)), Some((0, 1.0))]);
        let a = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 2.0),
                (1, 1, 3.0),
                (1, 3, -1.0),
                (3, 1, -1.0),
                (3, 3, 4.0),
                (2, 2, 7.0),
                (2, 3, 0.5),
                (3, 2, 0.5),
            ],
        );
        let r = p.reduce(&a);
        assert_eq!(r.get(0, 0), 3.0 - 2.0 + 4.0);
        assert_eq!(r.get(1, 1), 7.0);
        assert_eq!(r.get(0, 1), 0.5);
        let x = [1.5, -2.0];
        assert_eq!(p.restrict(&p.expand(&x)), vec![3.0, -2.0]);
    }
}
