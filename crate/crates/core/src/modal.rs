//! Smallest eigenpairs of sparse Hermitian pencils `K φ = λ M φ`, and the
//! relevance filters that pick the modes coupling to macroscopic motion.
//!
//! The solver is a thick-restart block Lanczos iteration on the
//! shift-inverted operator `(K + sM)⁻¹ M`, which is self-adjoint in the `M`
//! inner product, with full reorthogonalization. Eigenvalues are the
//! Rayleigh quotients of the converged Ritz vectors.
//! `K` may be singular: the shift is positive, so `K + sM` stays definite
//! and rigid-body modes are computed like any other.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{hermitian_eigen, Mat};
use crate::error::{Error, Result};
use crate::fem::ConstraintOperators;
use crate::scalar::{axpy, dot, norm, Scalar};
use crate::skyline::SkylineCholesky;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Boundary prescribed (lower bandgap bounds).
    Restricted,
    /// Before boundary restrictions (upper bandgap bounds).
    Unrestricted,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSettings {
    /// Relative residual required of every wanted pair.
    pub tol: f64,
    /// Budget of subspace expansions.
    pub max_iterations: usize,
    pub block_size: usize,
    /// Relative shift `s = shift_factor · tr K / tr M`.
    pub shift_factor: f64,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: 400, block_size: 3, shift_factor: 1e-10, seed: 0x5eed_1234_abcd_0001 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalSolution<T = f64> {
    /// Ascending, rad²/s².
    pub eigenvalues: Vec<f64>,
    /// Mass-normalized modes in the space of the pencil.
    pub modes: Vec<Vec<T>>,
    /// Smaller of `‖(K − λM)φ‖ / max(‖Kφ‖, 10⁻⁴ (tr K / tr M) ‖Mφ‖)` and
    /// `(λ + s) ‖(K + sM)⁻¹Mφ − φ/(λ + s)‖_M`, `s` being the solver shift.
    pub residuals: Vec<f64>,
    /// Coupling norms `‖Q⁽ᵏ⁾‖` once a relevance filter has run.
    pub coupling: Vec<f64>,
    pub relevant: Vec<bool>,
    pub kind: SystemKind,
}

impl<T: Scalar> ModalSolution<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn relevant_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.relevant[k]).collect()
    }
}

/// Deterministic xorshift stream for start vectors.
struct Rng(u64);

impl Rng {
    fn next_f64(&mut self) -> f64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    fn vector<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::from_parts(self.next_f64(), self.next_f64())).collect()
    }
}

/// Active search space plus locked (converged) eigenvectors.
struct Space<'a, T: Scalar> {
    k: &'a CsrMatrix<T>,
    m: &'a CsrMatrix<T>,
    /// `K + sM` and its factor.
    shifted: CsrMatrix<T>,
    chol: SkylineCholesky<T>,
    locked: Vec<Vec<T>>,
    locked_m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    kv: Vec<Vec<T>>,
    mv: Vec<Vec<T>>,
    /// Deflated images `(K + sM)⁻¹ M v`.
    ov: Vec<Vec<T>>,
    /// `(MV)ᴴ OV`, grown with the basis.
    h: Vec<Vec<T>>,
}

fn combine<T: Scalar>(vs: &[Vec<T>], y: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); vs[0].len()];
    for (v, c) in vs.iter().zip(y) {
        if *c != T::zero() {
            axpy(*c, v, &mut out);
        }
    }
    out
}

/// Hermitian Gram matrix `aᵢᴴ bⱼ`.
fn gram<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let r = a.len();
    let mut g = vec![vec![T::zero(); r]; r];
    for i in 0..r {
        for j in i..r {
            let x = dot(&a[i], &b[j]);
            g[i][j] = if i == j { T::from_real(x.re()) } else { x };
            g[j][i] = x.conj();
        }
    }
    g
}

impl<'a, T: Scalar> Space<'a, T> {
    fn new(k: &'a CsrMatrix<T>, m: &'a CsrMatrix<T>, shifted: CsrMatrix<T>, chol: SkylineCholesky<T>) -> Self {
        Self {
            k,
            m,
            shifted,
            chol,
            locked: Vec::new(),
            locked_m: Vec::new(),
            v: Vec::new(),
            kv: Vec::new(),
            mv: Vec::new(),
            ov: Vec::new(),
            h: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    fn deflate(&self, w: &mut [T]) {
        for (v, mv) in self.locked.iter().zip(&self.locked_m) {
            let c = dot(mv, w);
            axpy(-c, v, w);
        }
    }

    /// Two passes of `M`-orthogonalization against locked and active vectors.
    fn orthogonalize(&self, w: &mut [T]) {
        for _ in 0..2 {
            self.deflate(w);
            for (v, mv) in self.v.iter().zip(&self.mv) {
                let c = dot(mv, w);
                axpy(-c, v, w);
            }
        }
    }

    /// Deflated `(K + sM)⁻¹ b`, with one step of iterative refinement.
    fn image(&self, b: &[T]) -> Vec<T> {
        let mut x = self.chol.solve(b);
        let ax = self.shifted.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
        for (xi, d) in x.iter_mut().zip(&self.chol.solve(&r)) {
            *xi += *d;
        }
        self.deflate(&mut x);
        x
    }

    /// Appends `w` after orthogonalization; false when it lies in the span.
    fn push(&mut self, mut w: Vec<T>) -> bool {
        let n0 = norm(&w);
        if !(n0 > 0.0) || !n0.is_finite() {
            return false;
        }
        self.orthogonalize(&mut w);
        let mw = self.m.mul_vec(&w);
        let nrm = crate::math::sqrt(dot(&w, &mw).re().max(0.0));
        if !(norm(&w) > 1e-10 * n0) || !(nrm > 0.0) {
            return false;
        }
        let inv = 1.0 / nrm;
        let w: Vec<T> = w.iter().map(|x| x.scale(inv)).collect();
        let mw: Vec<T> = mw.iter().map(|x| x.scale(inv)).collect();
        let ow = self.image(&mw);
        let kw = self.k.mul_vec(&w);
        grow(&mut self.h, self.mv.iter().map(|mv| dot(mv, &ow)).collect(), dot(&mw, &ow).re());
        self.kv.push(kw);
        self.mv.push(mw);
        self.ov.push(ow);
        self.v.push(w);
        true
    }

    /// Replaces the active basis by `V yⱼ` (columns `M`-orthonormal).
    fn rebuild(&mut self, cols: &[Vec<T>]) {
        let v: Vec<Vec<T>> = cols.iter().map(|y| combine(&self.v, y)).collect();
        let kv: Vec<Vec<T>> = cols.iter().map(|y| combine(&self.kv, y)).collect();
        let mv: Vec<Vec<T>> = cols.iter().map(|y| combine(&self.mv, y)).collect();
        let mut ov: Vec<Vec<T>> = cols.iter().map(|y| combine(&self.ov, y)).collect();
        for o in ov.iter_mut() {
            self.deflate(o);
        }
        self.h = gram(&mv, &ov);
        self.v = v;
        self.kv = kv;
        self.mv = mv;
        self.ov = ov;
    }

    /// Refactors `K + sM` for a new shift and recomputes the images.
    fn reshift(&mut self, s: f64) -> Result<()> {
        self.shifted = self.k.add_scaled(T::from_real(s), self.m);
        self.chol = SkylineCholesky::factor(&self.shifted)?;
        self.ov = self.mv.iter().map(|mv| self.image(mv)).collect();
        self.h = gram(&self.mv, &self.ov);
        Ok(())
    }

    fn lock(&mut self, phi: Vec<T>, mphi: Vec<T>) {
        self.locked.push(phi);
        self.locked_m.push(mphi);
    }
}

fn grow<T: Scalar>(h: &mut Vec<Vec<T>>, col: Vec<T>, diag: f64) {
    for (row, c) in h.iter_mut().zip(&col) {
        row.push(*c);
    }
    let mut last: Vec<T> = col.iter().map(|c| c.conj()).collect();
    last.push(T::from_real(diag));
    h.push(last);
}

fn trace_re<T: Scalar>(a: &CsrMatrix<T>) -> f64 {
    a.trace().re()
}

/// Fixes the arbitrary phase of a mode: largest entry real and positive.
fn canonical_phase<T: Scalar>(v: &mut [T]) {
    let Some(big) = v.iter().copied().max_by(|a, b| a.abs_sq().total_cmp(&b.abs_sq())) else { return };
    let a = big.abs();
    if a == 0.0 {
        return;
    }
    let ph = big.conj().scale(1.0 / a);
    for x in v.iter_mut() {
        *x *= ph;
    }
}

/// The `count` algebraically smallest eigenpairs of `K φ = λ M φ`.
pub fn solve_smallest<T: Scalar>(
    k: &CsrMatrix<T>,
    m: &CsrMatrix<T>,
    count: usize,
    settings: &EigenSettings,
) -> Result<ModalSolution<T>> {
    solve_smallest_from(k, m, count, settings, &[])
}

/// As [`solve_smallest`], seeding the subspace with `start` vectors (for
/// example the modes of a nearby, previously solved pencil).
pub fn solve_smallest_from<T: Scalar>(
    k: &CsrMatrix<T>,
    m: &CsrMatrix<T>,
    count: usize,
    settings: &EigenSettings,
    start: &[Vec<T>],
) -> Result<ModalSolution<T>> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument("eigenproblem needs square matrices of equal size".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("requested zero eigenpairs".into()));
    }
    let count = count.min(n);
    let (tk, tm) = (trace_re(k), trace_re(m));
    if !(tm > 0.0) {
        return Err(Error::InvalidArgument("mass matrix has no positive diagonal".into()));
    }
    let mut s = if tk > 0.0 { settings.shift_factor * tk / tm } else { settings.shift_factor };
    let shifted = k.add_scaled(T::from_real(s), m);
    let chol = SkylineCholesky::factor(&shifted)?;
    // Residual scale for (near-)rigid modes, where ‖Kφ‖ vanishes.
    let floor = 1e-4 * if tk > 0.0 { tk / tm } else { 1.0 };

    let block = settings.block_size.max(1).min(n);
    let max_dim = if n <= 200 { n } else { n.min((3 * count + 2 * block).max(count + 40)) };
    let mut space = Space::new(k, m, shifted, chol);
    let mut rng = Rng(settings.seed | 1);
    // Krylov frontier: active vectors whose images extend the basis next.
    // Start vectors enter through their images, which carry no stiff
    // high-frequency content.
    let mut frontier: Vec<usize> = Vec::new();
    for x in start.iter().filter(|x| x.len() == n) {
        if space.len() + 2 * block >= max_dim {
            break;
        }
        let before = space.len();
        if space.push(space.image(&m.mul_vec(x))) {
            frontier.push(before);
        }
    }
    let target = (space.len() + block).min(n);
    let mut attempts = 0;
    while space.len() < target && attempts < 10 * block {
        let before = space.len();
        if space.push(space.image(&m.mul_vec(&rng.vector(n)))) {
            frontier.push(before);
        }
        attempts += 1;
    }
    if space.len() == 0 {
        return Err(Error::SolverFailure { converged: 0, wanted: count, residual: f64::INFINITY });
    }

    let mut done: Vec<(f64, Vec<T>, f64)> = Vec::new();
    let mut reshifted = false;
    let mut worst = f64::INFINITY;
    let (mut best, mut stalled) = (f64::INFINITY, 0usize);
    for _iter in 0..settings.max_iterations {
        let mdim = space.len();
        let need = count - done.len();
        let full = mdim + done.len() == n;
        let width = frontier.len().max(block);
        let restart = !full && mdim + width > max_dim;
        // Next Krylov block, orthogonal to the whole current basis so the
        // recurrence survives a thick restart.
        let mut images: Vec<(f64, Vec<T>)> = Vec::with_capacity(frontier.len());
        if !full {
            for &i in &frontier {
                let mut w = space.ov[i].clone();
                let before = norm(&w);
                space.orthogonalize(&mut w);
                let ratio = norm(&w) / before.max(f64::MIN_POSITIVE);
                if ratio > 1e-8 {
                    images.push((ratio, w));
                }
            }
        }
        if !reshifted && (full || restart || mdim >= need + block) {
            reshifted = true;
            // Move the shift up to the scale of the lowest non-rigid
            // eigenvalue: a shift far below it lets solve errors along
            // rigid modes swamp the rest of the spectrum.
            let (lam, _) = hermitian_eigen(&Mat::from_rows(&gram(&space.v, &space.kv)));
            let null = 1e-12 * if tk > 0.0 { tk / tm } else { 1.0 };
            if let Some(&low) = lam.iter().find(|l| **l > null) {
                if 0.5 * low > s {
                    s = 0.5 * low;
                    space.reshift(s)?;
                    continue;
                }
            }
        }
        if full || restart || mdim >= need + block {
            // Rayleigh-Ritz on the shifted operator keeps the Krylov
            // recurrence consistent through locking and restarts; its
            // largest values are the smallest eigenvalues.
            let (_, y) = hermitian_eigen(&Mat::from_rows(&space.h));
            let want = need.min(mdim);
            let col = |r: usize| y.column(mdim - 1 - r);
            let mut lam = Vec::with_capacity(want);
            let mut res = Vec::with_capacity(want);
            for r in 0..want {
                let yi = col(r);
                let phi = combine(&space.v, &yi);
                let kphi = combine(&space.kv, &yi);
                let mphi = combine(&space.mv, &yi);
                let ophi = combine(&space.ov, &yi);
                let l = dot(&phi, &kphi).re();
                // Pencil residual, and residual of the shift-inverted problem
                // `(λ + s)‖Aφ − φ/(λ + s)‖_M`; the latter is insensitive to
                // rounding in stiff high-frequency components, the former
                // to solve errors along rigid modes.
                let mut rk = kphi.clone();
                axpy(T::from_real(-l), &mphi, &mut rk);
                let pencil = norm(&rk) / norm(&kphi).max(floor * norm(&mphi)).max(f64::MIN_POSITIVE);
                let mut ro = ophi;
                axpy(T::from_real(-1.0 / (l + s)), &phi, &mut ro);
                let shifted = (l + s).abs() * crate::math::sqrt(dot(&ro, &m.mul_vec(&ro)).re().max(0.0));
                res.push(pencil.min(shifted));
                lam.push(l);
            }
            worst = res.iter().copied().fold(0.0, f64::max);
            if worst < 0.5 * best {
                best = worst;
                stalled = 0;
            } else {
                stalled += 1;
            }
            // Residuals that stop improving sit on the rounding floor of the
            // factorization; accept them within a hundredfold of `tol`.
            let tol = if stalled >= 20 { 100.0 * settings.tol } else { settings.tol };
            let lead = res.iter().take_while(|r| **r <= tol).count();
            if lead == need || full {
                if lead < want && worst > tol.max(1e-8) {
                    break;
                }
                for r in 0..want {
                    done.push((lam[r], combine(&space.v, &col(r)), res[r]));
                }
                done.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut sol = ModalSolution {
                    eigenvalues: Vec::with_capacity(count),
                    modes: Vec::with_capacity(count),
                    residuals: Vec::with_capacity(count),
                    coupling: vec![0.0; count],
                    relevant: vec![false; count],
                    kind: SystemKind::Other,
                };
                for (l, mut phi, r) in done.into_iter().take(count) {
                    canonical_phase(&mut phi);
                    sol.eigenvalues.push(l);
                    sol.modes.push(phi);
                    sol.residuals.push(r);
                }
                return Ok(sol);
            }
            if lead > 0 || restart {
                // Lock converged leading pairs; on a full basis keep only the
                // dominant Ritz vectors (thick restart).
                for r in 0..lead {
                    let yi = col(r);
                    let phi = combine(&space.v, &yi);
                    let mphi = combine(&space.mv, &yi);
                    done.push((lam[r], phi.clone(), res[r]));
                    space.lock(phi, mphi);
                }
                let keep = if restart { (need + block).max(max_dim / 2).min(max_dim - width).min(mdim) } else { mdim };
                let cols: Vec<Vec<T>> = (lead..keep).map(col).collect();
                space.rebuild(&cols);
            }
        }
        frontier.clear();
        for (_, w) in images {
            let before = space.len();
            if space.len() < max_dim && space.push(w) {
                frontier.push(before);
            }
        }
        let mut tries = 0;
        while frontier.is_empty() && space.len() + done.len() < n && space.len() < max_dim && tries < 10 {
            // Invariant subspace reached: continue from a random vector.
            let before = space.len();
            if space.push(space.image(&m.mul_vec(&rng.vector(n)))) {
                frontier.push(before);
            }
            tries += 1;
        }
        if frontier.is_empty() {
            break;
        }
    }
    let converged = done.len();
    Err(Error::SolverFailure { converged, wanted: count, residual: worst })
}

/// Row operators `Pᵀ M I_d / V`: coupling `⟨ρ φ⟩` of a reduced mode.
pub fn momentum_operator(mass: &CsrMatrix<f64>, ops: &ConstraintOperators, volume: f64) -> [Vec<f64>; 2] {
    core::array::from_fn(|d| {
        let mi = mass.mul_vec(&ops.rigid.column(d));
        ops.projection.restrict(&mi).iter().map(|x| x / volume).collect()
    })
}

/// Row operators `Pᵀ N_dᵀ`: mean displacement `⟨φ⟩` of a reduced mode.
pub fn mean_operator(ops: &ConstraintOperators) -> [Vec<f64>; 2] {
    core::array::from_fn(|d| ops.projection.restrict(ops.mean.row(d)))
}

fn couplings(sol: &ModalSolution<f64>, op: &[Vec<f64>; 2]) -> Vec<[f64; 2]> {
    sol.modes.iter().map(|phi| [dot(&op[0], phi), dot(&op[1], phi)]).collect()
}

fn flag(sol: &mut ModalSolution<f64>, q: &[[f64; 2]], eligible: &[bool], delta_tol: f64) -> Result<Vec<usize>> {
    sol.coupling = q.iter().map(|c| libm::hypot(c[0], c[1])).collect();
    let max = (0..sol.len()).filter(|&k| eligible[k]).map(|k| sol.coupling[k]).fold(0.0, f64::max);
    sol.relevant = (0..sol.len()).map(|k| eligible[k] && max > 0.0 && sol.coupling[k] / max > delta_tol).collect();
    let idx = sol.relevant_indices();
    if idx.is_empty() {
        Err(Error::NoRelevantMode)
    } else {
        Ok(idx)
    }
}

/// Modes with normalized momentum coupling `‖⟨ρφ⟩‖ / max ‖⟨ρφ⟩‖ > δ_tol`.
///
/// `momentum` holds the two rows of [`momentum_operator`].
pub fn filter_relevant_restricted(
    sol: &mut ModalSolution<f64>,
    momentum: &[Vec<f64>; 2],
    delta_tol: f64,
) -> Result<Vec<usize>> {
    sol.kind = SystemKind::Restricted;
    let q = couplings(sol, momentum);
    let eligible = vec![true; sol.len()];
    flag(sol, &q, &eligible, delta_tol)
}

/// Strictly positive modes with normalized mean displacement above `δ_tol`.
///
/// Eigenvalues below `1e-6` of the largest computed one count as rigid.
pub fn filter_relevant_unrestricted(
    sol: &mut ModalSolution<f64>,
    mean: &[Vec<f64>; 2],
    delta_tol: f64,
) -> Result<Vec<usize>> {
    sol.kind = SystemKind::Unrestricted;
    let q = couplings(sol, mean);
    let top = sol.eigenvalues.iter().copied().fold(0.0, f64::max);
    let eligible: Vec<bool> = sol.eigenvalues.iter().map(|&l| l > 1e-6 * top && l > 0.0).collect();
    flag(sol, &q, &eligible, delta_tol)
}

/// Solves with `count` modes, doubling it until `classify` finds a relevant
/// mode or the pencil is exhausted.
pub fn solve_until_relevant(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    count: usize,
    settings: &EigenSettings,
    start: &[Vec<f64>],
    mut classify: impl FnMut(&mut ModalSolution<f64>) -> Result<Vec<usize>>,
) -> Result<(ModalSolution<f64>, Vec<usize>)> {
    let n = k.nrows();
    let mut count = count.max(1);
    loop {
        let mut sol = solve_smallest_from(k, m, count, settings, start)?;
        match classify(&mut sol) {
            Ok(idx) => return Ok((sol, idx)),
            Err(Error::NoRelevantMode) if count < n => count = (2 * count).min(n),
            Err(e) => return Err(e),
        }
    }
}
