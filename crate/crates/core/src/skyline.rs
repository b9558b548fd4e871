//! Envelope (skyline) Cholesky factorization `A = L Lᴴ` for sparse Hermitian
//! positive definite matrices, with a reverse Cuthill-McKee reordering.
//!
//! Structured FE meshes give narrow envelopes, which makes this the cheapest
//! direct solver for the RVE problems here. Periodic (torus) connectivity is
//! handled by the reordering; a few dense rows (rigid-region masters) are
//! moved to the end so they do not widen every other row.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Symmetric fill-reducing permutation.
#[derive(Debug, Clone)]
pub struct Ordering {
    /// new index -> old index
    pub perm: Vec<usize>,
    /// old index -> new index
    pub iperm: Vec<usize>,
}

impl Ordering {
    pub fn natural(n: usize) -> Self {
        Self { perm: (0..n).collect(), iperm: (0..n).collect() }
    }

    fn from_perm(perm: Vec<usize>) -> Self {
        let mut iperm = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        Self { perm, iperm }
    }

    /// Number of stored off-diagonal entries in the lower envelope.
    pub fn profile<T: Scalar>(&self, a: &CsrMatrix<T>) -> usize {
        let n = a.nrows();
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            let i = self.iperm[r];
            for &c in a.row(r).0 {
                let j = self.iperm[c];
                if j < i && j < first[i] {
                    first[i] = j;
                }
            }
        }
        first.iter().enumerate().map(|(i, f)| i - f).sum()
    }

    /// Reverse Cuthill-McKee with hub rows (degree far above average) last.
    pub fn rcm<T: Scalar>(a: &CsrMatrix<T>) -> Self {
        let n = a.nrows();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|r| a.row(r).0.iter().copied().filter(|&c| c != r).collect())
            .collect();
        let mean = adj.iter().map(Vec::len).sum::<usize>() as f64 / n.max(1) as f64;
        let hub_limit = (8.0 * mean).max(64.0) as usize;
        let is_hub: Vec<bool> = adj.iter().map(|v| v.len() > hub_limit).collect();
        let degree = |v: usize| adj[v].iter().filter(|&&w| !is_hub[w]).count();

        let mut visited = is_hub.clone();
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        // Lowest-degree unvisited node seeds the next component.
        while let Some(seed) = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree(v), v)) {
            let start = pseudo_peripheral(seed, &adj, &is_hub, &degree);
            visited[start] = true;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> =
                    adj[v].iter().copied().filter(|&w| !visited[w]).collect();
                next.sort_by_key(|&w| (degree(w), w));
                for w in next {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order.reverse();
        order.extend((0..n).filter(|&v| is_hub[v]));
        Self::from_perm(order)
    }

    /// Picks the smaller envelope among natural and RCM orderings.
    pub fn best<T: Scalar>(a: &CsrMatrix<T>) -> Self {
        let natural = Self::natural(a.nrows());
        let rcm = Self::rcm(a);
        if rcm.profile(a) < natural.profile(a) {
            rcm
        } else {
            natural
        }
    }
}

fn pseudo_peripheral(
    seed: usize,
    adj: &[Vec<usize>],
    is_hub: &[bool],
    degree: &impl Fn(usize) -> usize,
) -> usize {
    let n = adj.len();
    let mut current = seed;
    let mut ecc = 0usize;
    for _ in 0..8 {
        let mut level = vec![usize::MAX; n];
        level[current] = 0;
        let mut queue = VecDeque::from([current]);
        let mut last = Vec::new();
        let mut depth = 0;
        while let Some(v) = queue.pop_front() {
            if level[v] > depth {
                depth = level[v];
                last.clear();
            }
            last.push(v);
            for &w in &adj[v] {
                if !is_hub[w] && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let candidate = *last.iter().min_by_key(|&&v| (degree(v), v)).unwrap_or(&current);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        current = candidate;
    }
    current
}

/// `A = L Lᴴ` with `L` stored row-wise over its envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T> {
    ordering: Ordering,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> SkylineCholesky<T> {
    /// Factorizes with the better of natural/RCM orderings.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let ordering = Ordering::best(a);
        Self::factor_with(a, ordering)
    }

    pub fn factor_with(a: &CsrMatrix<T>, ordering: Ordering) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            let i = ordering.iperm[r];
            for &c in a.row(r).0 {
                let j = ordering.iperm[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![T::zero(); offset[n]];
        for r in 0..n {
            let i = ordering.iperm[r];
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let j = ordering.iperm[*c];
                if j <= i {
                    data[offset[i] + (j - first[i])] = *v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (before, rest) = data.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &before[offset[j]..offset[j + 1]];
                let mut s = row_i[j - fi];
                // Σ_k L[i][k] conj(L[j][k])
                let li = &row_i[k0 - fi..j - fi];
                let lj = &row_j[k0 - fj..j - fj];
                for (x, y) in li.iter().zip(lj) {
                    s -= *x * y.conj();
                }
                let djj = row_j[j - fj].re();
                row_i[j - fi] = s.scale(1.0 / djj);
            }
            let mut d = row_i[i - fi].re();
            for x in &row_i[..i - fi] {
                d -= x.abs_sq();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: ordering.perm[i], pivot: d });
            }
            row_i[i - fi] = T::from_real(math::sqrt(d));
        }
        Ok(Self { ordering, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries of `L`, a proxy for factorization cost.
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); b.len()];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[T], out: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.ordering.perm.iter().map(|&old| b[old]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (l, yk) in row[..i - fi].iter().zip(&y[fi..i]) {
                s -= *l * *yk;
            }
            y[i] = s.scale(1.0 / row[i - fi].re());
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let xi = y[i].scale(1.0 / row[i - fi].re());
            y[i] = xi;
            for (l, yk) in row[..i - fi].iter().zip(&mut y[fi..i]) {
                *yk -= l.conj() * xi;
            }
        }
        for (new, &old) in self.ordering.perm.iter().enumerate() {
            out[old] = y[new];
        }
    }
}
