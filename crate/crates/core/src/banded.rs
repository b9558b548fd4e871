//! Banded LU with partial pivoting for general (non-Hermitian) systems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix stored as one contiguous column window per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    lower: usize,
    upper: usize,
    start: Vec<usize>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> BandMatrix<T> {
    /// `lower`/`upper` bound `i − j` and `j − i` of the nonzeros.
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let start: Vec<usize> = (0..n).map(|i| i.saturating_sub(lower)).collect();
        let rows = (0..n).map(|i| vec![T::zero(); (i + upper + 1).min(n) - start[i]]).collect();
        Self { n, lower, upper, start, rows }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, r: usize, c: usize, v: T) {
        assert!(r < self.n && c < self.n, "({r}, {c}) outside {}×{}", self.n, self.n);
        assert!(c + self.lower >= r && r + self.upper >= c, "({r}, {c}) outside the band");
        self.rows[r][c - self.start[r]] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let s = self.start[r];
        if c < s {
            return T::zero();
        }
        self.rows[r].get(c - s).copied().unwrap_or(T::zero())
    }

    /// Solves `A X = B`, consuming the matrix.
    pub fn solve(mut self, b: &Mat<T>) -> Result<Mat<T>> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::InvalidArgument(format!("right-hand side has {} rows, need {n}", b.rows())));
        }
        let mut x = b.clone();
        let scale = self.rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + self.lower).min(n - 1);
            let (p, pmax) = (k..=last).map(|i| (i, self.get(i, k).abs())).fold((k, -1.0), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
            if pmax <= 1e-300 || pmax <= scale * 1e-15 {
                return Err(Error::Constraint(format!("singular banded system at column {k}")));
            }
            if p != k {
                self.rows.swap(k, p);
                self.start.swap(k, p);
                for j in 0..x.cols() {
                    let t = x[(k, j)];
                    x[(k, j)] = x[(p, j)];
                    x[(p, j)] = t;
                }
            }
            // Row k now starts at or before column k.
            let off = k - self.start[k];
            let pivot_row: Vec<T> = self.rows[k][off..].to_vec();
            let pivot = pivot_row[0];
            for i in k + 1..=last {
                let aik = self.get(i, k);
                if aik.abs() == 0.0 {
                    continue;
                }
                let f = aik / pivot;
                let end = k + pivot_row.len();
                let s = self.start[i];
                let need = end - s;
                if self.rows[i].len() < need {
                    self.rows[i].resize(need, T::zero());
                }
                for (t, v) in pivot_row.iter().enumerate() {
                    self.rows[i][k + t - s] -= f * *v;
                }
                for j in 0..x.cols() {
                    let xk = x[(k, j)];
                    x[(i, j)] -= f * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let s = self.start[k];
            let row = &self.rows[k];
            let diag = row[k - s];
            for j in 0..x.cols() {
                let mut acc = x[(k, j)];
                for (t, v) in row.iter().enumerate().skip(k - s + 1) {
                    acc -= *v * x[(s + t, j)];
                }
                x[(k, j)] = acc / diag;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    #[test]
    fn matches_dense_lu_with_pivoting() {
        let n = 12;
        let (lo, up) = (3, 2);
        let mut band = BandMatrix::<Complex64>::zeros(n, lo, up);
        let mut dense = Mat::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(lo)..=(i + up).min(n - 1) {
                // Small diagonal forces row exchanges.
                let v = Complex64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 * 0.5);
                let v = if i == j { v * 1e-3 } else { v };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b = Mat::from_fn(n, 2, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
        let xb = band.solve(&b).unwrap();
        let xd = dense.solve(&b).unwrap();
        for i in 0..n {
            for j in 0..2 {
                assert!((xb[(i, j)] - xd[(i, j)]).norm() < 1e-9 * (1.0 + xd[(i, j)].norm()));
            }
        }
    }

    #[test]
    fn singular_reported() {
        let mut a = BandMatrix::<f64>::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(a.solve(&Mat::from_fn(3, 1, |_, _| 1.0)).is_err());
    }
}
