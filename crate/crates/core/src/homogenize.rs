//! Effective properties of a final design: quasi-static elastic and viscous
//! tensors, average density, and the modally reduced micro-inertial system
//! that yields a frequency-dependent effective density.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::fem::{assemble, build_constraints, BoundaryCondition, ConstraintSpec, MaterialField, StructuredGrid, Voigt};
use crate::materials::{isotropic_tensors, MaterialPhase};
use crate::math;
use crate::modal::{filter_relevant_restricted, momentum_operator, solve_until_relevant, EigenSettings, ModalSolution};
use crate::scalar::dot;
use crate::skyline::SkylineCholesky;
use crate::sparse::CsrMatrix;
use crate::Complex64;

/// Relative `|Q_x|` below which a pole is treated as x-decoupled.
pub const X_COUPLING_TOL: f64 = 1e-3;

/// Phases of a materialized three-phase design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMaterials {
    pub frame: MaterialPhase,
    pub inclusion: MaterialPhase,
    pub coating: MaterialPhase,
}

impl Default for DesignMaterials {
    fn default() -> Self {
        Self { frame: MaterialPhase::epoxy(), inclusion: MaterialPhase::steel(), coating: MaterialPhase::rubber() }
    }
}

/// Gauss-point field of a design: frame elements take the frame phase,
/// `χ ≥ ½` the inclusion and the rest the coating.
pub fn design_field(
    grid: &StructuredGrid,
    frame_elements: &[bool],
    chi: &[f64],
    mats: &DesignMaterials,
) -> Result<MaterialField> {
    let ne = grid.num_elements();
    if frame_elements.len() != ne || chi.len() != 4 * ne {
        return Err(Error::InvalidArgument(format!(
            "design has {} frame flags and {} Gauss values for {ne} elements",
            frame_elements.len(),
            chi.len()
        )));
    }
    for p in [&mats.frame, &mats.inclusion, &mats.coating] {
        p.validate()?;
    }
    let tensors = [&mats.frame, &mats.inclusion, &mats.coating].map(isotropic_tensors);
    let rho = [mats.frame.rho, mats.inclusion.rho, mats.coating.rho];
    let mut field = MaterialField {
        density: Vec::with_capacity(chi.len()),
        stiffness: Vec::with_capacity(chi.len()),
        viscosity: Vec::with_capacity(chi.len()),
    };
    for (k, c) in chi.iter().enumerate() {
        let phase = if frame_elements[k / 4] {
            0
        } else if *c >= 0.5 {
            1
        } else {
            2
        };
        field.density.push(rho[phase]);
        field.stiffness.push(tensors[phase].0);
        field.viscosity.push(tensors[phase].1);
    }
    Ok(field)
}

fn voigt_from(m: &Mat<f64>, scale: f64) -> Voigt {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.5 * (m[(i, j)] + m[(j, i)]) * scale;
        }
    }
    out
}

/// Effective elastic and viscous tensors (Pa, Pa·s) from the periodic,
/// corner-pinned microfluctuation problem.
pub fn quasi_static(grid: &StructuredGrid, field: &MaterialField) -> Result<(Voigt, Voigt)> {
    let sys = assemble(grid, field)?;
    let ops = build_constraints(grid, &ConstraintSpec::new(BoundaryCondition::PeriodicPlusPinned))?;
    let p = &ops.projection;
    let chol = SkylineCholesky::factor(&p.reduce(&sys.stiffness))
        .map_err(|e| Error::Constraint(format!("reduced stiffness is singular ({e})")))?;
    // Columns of Ỹ = (I − P (PᵀKP)⁻¹ PᵀK) Y.
    let mut yt: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut ky: Vec<Vec<f64>> = Vec::with_capacity(3);
    for j in 0..3 {
        let y = ops.affine.column(j);
        let rhs: Vec<f64> = p.restrict(&sys.stiffness.mul_vec(&y)).iter().map(|v| -v).collect();
        let fluct = p.expand(&chol.solve(&rhs));
        let t: Vec<f64> = y.iter().zip(&fluct).map(|(a, b)| a + b).collect();
        ky.push(sys.stiffness.mul_vec(&t));
        yt.push(t);
    }
    let v = grid.volume();
    let c = Mat::from_fn(3, 3, |i, j| dot(&ops.affine.column(i), &ky[j]));
    let cy: Vec<Vec<f64>> = yt.iter().map(|t| sys.damping.mul_vec(t)).collect();
    let eta = Mat::from_fn(3, 3, |i, j| dot(&yt[i], &cy[j]));
    Ok((voigt_from(&c, 1.0 / v), voigt_from(&eta, 1.0 / v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationSettings {
    /// Relevant modes up to this frequency are kept, Hz.
    pub cutoff_hz: f64,
    pub delta_tol: f64,
    /// Initial number of modes requested from the eigensolver.
    pub mode_count: usize,
    pub eigen: EigenSettings,
}

impl Default for HomogenizationSettings {
    fn default() -> Self {
        Self { cutoff_hz: 6000.0, delta_tol: 1e-3, mode_count: 12, eigen: EigenSettings::default() }
    }
}

/// One computed mode of the inertial system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRecord {
    pub frequency_hz: f64,
    /// Coupling `Q⁽ᵏ⁾`, √(kg/m³).
    pub q: [f64; 2],
    pub relevant: bool,
    pub kept: bool,
}

/// Reduced micro-inertial system.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialSystem {
    pub rho_bar: f64,
    /// Kept modes: coupling rows `Q⁽ᵏ⁾`.
    pub q: Vec<[f64; 2]>,
    /// Kept squared natural frequencies, rad²/s².
    pub omega2: Vec<f64>,
    /// `Φᵀ C* Φ` over the kept modes, rad/s.
    pub omega_d: Mat<f64>,
    /// Kept modes in the reduced space of the pencil.
    pub modes: Vec<Vec<f64>>,
    /// Every computed mode below the cutoff, kept or not.
    pub table: Vec<ModeRecord>,
    /// Largest `‖Ω_D[k, non-relevant]‖ / Ω_D[k, k]` over kept modes `k`.
    pub coupling_ratio: f64,
}

/// Modal reduction of `M* ü* + C* u̇* + K* u* = −Dᵀ ü`.
///
/// `dt` holds the two columns of `Dᵀ = Pᵀ M I`. Modes are mass-normalized and
/// `Q⁽ᵏ⁾ = D φ⁽ᵏ⁾ / √V`, so the effective density is
/// `ρ̄ + ω² Q (Ω² − ω² − iωΩ_D)⁻¹ Qᵀ` in kg/m³.
pub fn modal_reduction(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    c: &CsrMatrix<f64>,
    dt: &[Vec<f64>; 2],
    rho_bar: f64,
    volume: f64,
    settings: &HomogenizationSettings,
) -> Result<InertialSystem> {
    let n = k.nrows();
    if !(volume > 0.0) || !(settings.cutoff_hz > 0.0) {
        return Err(Error::InvalidArgument("volume and cutoff must be positive".into()));
    }
    let momentum = [dt[0].iter().map(|v| v / volume).collect(), dt[1].iter().map(|v| v / volume).collect()];
    let cut = math::hz_to_rad(settings.cutoff_hz);
    let cut2 = cut * cut;
    // Grow the mode count until the spectrum passes the cutoff.
    let mut count = settings.mode_count.max(1).min(n);
    let sol: ModalSolution<f64> = loop {
        let (mut sol, _) = solve_until_relevant(k, m, count, &settings.eigen, &[], |s| {
            filter_relevant_restricted(s, &momentum, settings.delta_tol)
        })?;
        let top = sol.eigenvalues.last().copied().unwrap_or(0.0);
        if top > cut2 || sol.len() == n {
            filter_relevant_restricted(&mut sol, &momentum, settings.delta_tol)?;
            break sol;
        }
        count = (2 * count).min(n);
    };
    let scale = 1.0 / math::sqrt(volume);
    let mut table = Vec::new();
    let mut kept = Vec::new();
    let mut below = Vec::new();
    for (i, &l) in sol.eigenvalues.iter().enumerate() {
        if l > cut2 {
            continue;
        }
        let phi = &sol.modes[i];
        let q = [dot(&dt[0], phi) * scale, dot(&dt[1], phi) * scale];
        let keep = sol.relevant[i];
        table.push(ModeRecord { frequency_hz: math::rad_to_hz(math::sqrt(l.max(0.0))), q, relevant: keep, kept: keep });
        below.push(i);
        if keep {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        // The first relevant mode lies above the cutoff: keep it anyway.
        let i = sol.relevant.iter().position(|r| *r).ok_or(Error::NoRelevantMode)?;
        let phi = &sol.modes[i];
        let q = [dot(&dt[0], phi) * scale, dot(&dt[1], phi) * scale];
        let f = math::rad_to_hz(math::sqrt(sol.eigenvalues[i].max(0.0)));
        table.push(ModeRecord { frequency_hz: f, q, relevant: true, kept: true });
        below.push(i);
        kept.push(i);
    }
    let cphi: Vec<Vec<f64>> = below.iter().map(|&i| c.mul_vec(&sol.modes[i])).collect();
    let full_d = Mat::from_fn(below.len(), below.len(), |a, b| 0.5 * (dot(&sol.modes[below[a]], &cphi[b]) + dot(&sol.modes[below[b]], &cphi[a])));
    let pos: Vec<usize> = kept.iter().map(|i| below.iter().position(|b| b == i).unwrap_or(0)).collect();
    let omega_d = Mat::from_fn(kept.len(), kept.len(), |a, b| full_d[(pos[a], pos[b])]);
    let mut coupling_ratio: f64 = 0.0;
    for &a in &pos {
        let diag = full_d[(a, a)];
        let off: f64 = (0..below.len())
            .filter(|&b| !sol.relevant[below[b]])
            .map(|b| full_d[(a, b)] * full_d[(a, b)])
            .sum::<f64>();
        if diag > 0.0 {
            coupling_ratio = coupling_ratio.max(math::sqrt(off) / diag);
        }
    }
    Ok(InertialSystem {
        rho_bar,
        q: pos.iter().map(|&a| table[a].q).collect(),
        omega2: kept.iter().map(|&i| sol.eigenvalues[i]).collect(),
        omega_d,
        modes: kept.iter().map(|&i| sol.modes[i].clone()).collect(),
        table,
        coupling_ratio,
    })
}

/// Inertial reduction of an RVE with every boundary DOF prescribed.
pub fn inertial_reduction(grid: &StructuredGrid, field: &MaterialField, settings: &HomogenizationSettings) -> Result<InertialSystem> {
    let sys = assemble(grid, field)?;
    let ops = build_constraints(grid, &ConstraintSpec::new(BoundaryCondition::FullyPrescribedBoundary))?;
    let p = &ops.projection;
    let v = grid.volume();
    let dt = momentum_operator(&sys.mass, &ops, v).map(|row| row.iter().map(|x| x * v).collect::<Vec<f64>>());
    let (k, m, c) = (p.reduce(&sys.stiffness), p.reduce(&sys.mass), p.reduce(&sys.damping));
    modal_reduction(&k, &m, &c, &dt, field.mean_density(), v, settings)
}

/// Homogenized constitutive record of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMaterial {
    /// kg/m³
    pub rho_bar: f64,
    /// Pa
    pub c_eff: Voigt,
    /// Pa·s
    pub eta_eff: Voigt,
    /// Per kept mode, √(kg/m³).
    pub q: Vec<[f64; 2]>,
    /// rad²/s²
    pub omega2: Vec<f64>,
    /// rad/s
    pub omega_d: Mat<f64>,
    /// Diagnostics: every computed mode below the cutoff.
    pub table: Vec<ModeRecord>,
    pub coupling_ratio: f64,
}

impl EffectiveMaterial {
    /// Record without micro-inertia (a plain elastic or viscoelastic medium).
    pub fn simple(rho: f64, c_eff: Voigt, eta_eff: Voigt) -> Self {
        Self {
            rho_bar: rho,
            c_eff,
            eta_eff,
            q: Vec::new(),
            omega2: Vec::new(),
            omega_d: Mat::zeros(0, 0),
            table: Vec::new(),
            coupling_ratio: 0.0,
        }
    }

    pub fn from_phase(phase: &MaterialPhase) -> Self {
        let (c, e) = isotropic_tensors(phase);
        Self::simple(phase.rho, c, e)
    }

    pub fn with_resonators(mut self, q: Vec<[f64; 2]>, omega2: Vec<f64>, omega_d: Mat<f64>) -> Result<Self> {
        let n = q.len();
        if omega2.len() != n || omega_d.rows() != n || omega_d.cols() != n {
            return Err(Error::InvalidArgument(format!(
                "resonator data sizes differ: {n} couplings, {} frequencies, {}×{} damping",
                omega2.len(),
                omega_d.rows(),
                omega_d.cols()
            )));
        }
        if omega2.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("resonance frequencies must be positive".into()));
        }
        self.q = q;
        self.omega2 = omega2;
        self.omega_d = omega_d;
        Ok(self)
    }

    pub fn num_modes(&self) -> usize {
        self.q.len()
    }

    pub fn is_damped(&self) -> bool {
        self.omega_d.max_abs() > 0.0 || self.eta_eff.iter().flatten().any(|v| *v != 0.0)
    }

    /// Copy with every viscous quantity scaled by `factor` (viscosity enters
    /// `η_eff` and `Ω_D` linearly).
    pub fn with_viscosity_factor(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.eta_eff.iter_mut().flatten() {
            *v *= factor;
        }
        out.omega_d = out.omega_d.scaled(factor);
        out
    }

    /// `ρ̄ I + ω² Q (Ω² − ω² I − iωΩ_D)⁻¹ Qᵀ` (time dependence `e^{−iωt}`).
    pub fn effective_density(&self, omega: f64) -> Result<[[Complex64; 2]; 2]> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative frequency {omega}")));
        }
        let rb = Complex64::new(self.rho_bar, 0.0);
        let mut out = [[rb, Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), rb]];
        let n = self.num_modes();
        if n == 0 || omega == 0.0 {
            return Ok(out);
        }
        let w2 = omega * omega;
        let a = Mat::from_fn(n, n, |i, j| {
            let diag = if i == j { self.omega2[i] - w2 } else { 0.0 };
            Complex64::new(diag, -omega * self.omega_d[(i, j)])
        });
        let qt = Mat::from_fn(n, 2, |i, d| Complex64::new(self.q[i][d], 0.0));
        let x = a.solve(&qt).map_err(|_| Error::Pole { omega })?;
        let sing = self.omega2.iter().any(|o| (o - w2).abs() <= 1e-12 * o) && self.omega_d.max_abs() == 0.0;
        if sing {
            return Err(Error::Pole { omega });
        }
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    s += x[(i, c)] * self.q[i][r];
                }
                *v += s * w2;
            }
        }
        Ok(out)
    }

    /// Undamped x-direction bandgaps: each pole `Ωₖ` of `ρ_xx` with
    /// x-coupling paired with the next zero of `ρ_xx`, in rad/s.
    ///
    /// Poles with `|Q_x|` below `X_COUPLING_TOL` times the largest are
    /// y-polarized modes with round-off x coupling; they are left out, as
    /// their zero-width gaps would split the real ones.
    pub fn bandgaps_x(&self) -> Vec<(f64, f64)> {
        let qmax = self.q.iter().fold(0.0f64, |m, q| m.max(q[0].abs()));
        let mut poles: Vec<(f64, f64)> = self
            .omega2
            .iter()
            .zip(&self.q)
            .filter(|(_, q)| q[0] != 0.0 && q[0].abs() > X_COUPLING_TOL * qmax)
            .map(|(o, q)| (math::sqrt(*o), q[0] * q[0]))
            .collect();
        poles.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Degenerate pairs (x/y modes of a symmetric cell) act as one pole.
        let mut merged_poles: Vec<(f64, f64)> = Vec::new();
        for (o, q2) in poles {
            match merged_poles.last_mut() {
                Some(last) if o - last.0 <= 1e-8 * o => last.1 += q2,
                _ => merged_poles.push((o, q2)),
            }
        }
        let poles = merged_poles;
        let rho = |w: f64| self.rho_bar + w * w * poles.iter().map(|(o, q2)| q2 / (o * o - w * w)).sum::<f64>();
        let mut gaps = Vec::new();
        for (k, (lo, _)) in poles.iter().enumerate() {
            let hi_bound = poles.get(k + 1).map(|p| p.0);
            // Just above the pole ρ_xx → −∞; it increases monotonically
            // until the next pole.
            let mut a = lo * (1.0 + 1e-12);
            let mut b = match hi_bound {
                Some(h) => h * (1.0 - 1e-12),
                None => {
                    let mut b = 2.0 * lo;
                    while rho(b) < 0.0 && b < 1e6 * lo {
                        b *= 2.0;
                    }
                    b
                }
            };
            if rho(b) < 0.0 {
                gaps.push((*lo, b));
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if rho(mid) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            gaps.push((*lo, 0.5 * (a + b)));
        }
        // Overlapping gaps merge.
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for g in gaps {
            match merged.last_mut() {
                Some(last) if g.0 <= last.1 => last.1 = last.1.max(g.1),
                _ => merged.push(g),
            }
        }
        merged
    }

    /// Key = value report with all tensors row-major.
    pub fn report(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# effective density rho_eff(w) = rho_bar I + w^2 Q (Omega2 - w^2 I - i w Omega_D)^-1 Q^T");
        let _ = writeln!(s, "# Q = D Phi / sqrt(V) with mass-normalized modes; time dependence exp(-i w t)");
        let _ = writeln!(s, "rho_bar_kg_m3 = {:e}", self.rho_bar);
        let row = |m: &Voigt| m.iter().flatten().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "C_eff_Pa = {}", row(&self.c_eff));
        let _ = writeln!(s, "eta_eff_Pa_s = {}", row(&self.eta_eff));
        let _ = writeln!(s, "n_modes = {}", self.num_modes());
        let join = |it: &mut dyn Iterator<Item = f64>| it.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "Omega2_rad2_s2 = {}", join(&mut self.omega2.iter().copied()));
        let _ = writeln!(s, "Q_x_sqrt_kg_m3 = {}", join(&mut self.q.iter().map(|q| q[0])));
        let _ = writeln!(s, "Q_y_sqrt_kg_m3 = {}", join(&mut self.q.iter().map(|q| q[1])));
        let n = self.omega_d.rows();
        let _ = writeln!(s, "Omega_D_rad_s = {}", join(&mut (0..n * n).map(|k| self.omega_d[(k / n, k % n)])));
        let _ = writeln!(s, "coupling_ratio = {:e}", self.coupling_ratio);
        let _ = writeln!(s, "# mode table: index f_Hz |Q_x| |Q_y| relevant kept");
        for (i, m) in self.table.iter().enumerate() {
            let _ = writeln!(s, "mode = {i} {:.6} {:e} {:e} {} {}", m.frequency_hz, m.q[0].abs(), m.q[1].abs(), m.relevant, m.kept);
        }
        s
    }
}

/// Full homogenization: quasi-static tensors plus inertial reduction.
pub fn homogenize(grid: &StructuredGrid, field: &MaterialField, settings: &HomogenizationSettings) -> Result<EffectiveMaterial> {
    let (c_eff, eta_eff) = quasi_static(grid, field)?;
    let inertial = inertial_reduction(grid, field, settings)?;
    Ok(EffectiveMaterial {
        rho_bar: inertial.rho_bar,
        c_eff,
        eta_eff,
        q: inertial.q,
        omega2: inertial.omega2,
        omega_d: inertial.omega_d,
        table: inertial.table,
        coupling_ratio: inertial.coupling_ratio,
    })
}

/// Closed-form `C₁₁` of a laminate whose layers are stacked along x.
pub fn laminate_c11(fractions: &[f64], tensors: &[Voigt]) -> f64 {
    // σxx is continuous across the layers and εyy = γxy = 0 in each.
    let inv: f64 = fractions.iter().zip(tensors).map(|(f, c)| f / c[0][0]).sum();
    1.0 / inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::elastic_tensor;

    fn uniform(grid: &StructuredGrid, p: &MaterialPhase) -> MaterialField {
        let (c, e) = isotropic_tensors(p);
        MaterialField::uniform(grid, p.rho, c, e)
    }

    #[test]
    fn homogeneous_epoxy_tensor() {
        let g = StructuredGrid::new(6, 6, 0.01).unwrap();
        let p = MaterialPhase::epoxy();
        let (c, e) = quasi_static(&g, &uniform(&g, &p)).unwrap();
        let exact = elastic_tensor(p.bulk, p.shear);
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[i][j] - exact[i][j]).abs() <= 1e-8 * exact[0][0]);
                assert_eq!(e[i][j], 0.0);
            }
        }
        assert!((c[0][0] - 7.61e9).abs() < 0.01e9);
    }

    #[test]
    fn homogeneous_viscous_tensor() {
        let g = StructuredGrid::new(4, 4, 0.01).unwrap();
        let p = MaterialPhase::rubber().with_viscosity(10.0);
        let (_, e) = quasi_static(&g, &uniform(&g, &p)).unwrap();
        let exact = crate::materials::viscous_tensor(10.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((e[i][j] - exact[i][j]).abs() <= 1e-9 * 10.0);
            }
        }
    }

    #[test]
    fn stripes_match_laminate() {
        let g = StructuredGrid::new(20, 4, 0.01).unwrap();
        let (a, b) = (MaterialPhase::epoxy(), MaterialPhase::steel());
        let f = MaterialField::from_fn(&g, |p| {
            let ph = if p[0] < 0.005 { &a } else { &b };
            let (c, e) = isotropic_tensors(ph);
            (ph.rho, c, e)
        });
        let (c, _) = quasi_static(&g, &f).unwrap();
        let want = laminate_c11(&[0.5, 0.5], &[isotropic_tensors(&a).0, isotropic_tensors(&b).0]);
        assert!((c[0][0] - want).abs() < 0.01 * want, "{} vs {want}", c[0][0]);
    }

    #[test]
    fn weak_x_coupling_does_not_split_gap() {
        // Near-degenerate x/y pair; the y mode leaks a round-off x coupling.
        let em = EffectiveMaterial::simple(1.0, elastic_tensor(1.0, 1.0), [[0.0; 3]; 3])
            .with_resonators(vec![[0.5, 1e-6], [1e-6, 0.5]], vec![1.0, 1.0001], Mat::zeros(2, 2))
            .unwrap();
        let gaps = em.bandgaps_x();
        assert_eq!(gaps.len(), 1);
        // ρ̄ + ω² q²/(1 − ω²) = 0 at ω² = 1/(1 − q²).
        assert!((gaps[0].1 - math::sqrt(1.0 / 0.75)).abs() < 1e-9);
    }

    #[test]
    fn toy_density_sign() {
        let toy = |q: f64| {
            EffectiveMaterial::simple(1.0, elastic_tensor(1.0, 1.0), [[0.0; 3]; 3])
                .with_resonators(vec![[q, 0.0]], vec![1.0], Mat::zeros(1, 1))
                .unwrap()
        };
        let em = toy(1.0);
        assert_eq!(em.effective_density(0.0).unwrap()[0][0].re, 1.0);
        for w in [0.3, 0.9, 1.1, 1.3, 1.5, 3.0] {
            let r = em.effective_density(w).unwrap()[0][0];
            let w2 = w * w;
            let expect = 1.0 + w2 / (1.0 - w2);
            assert!((r.re - expect).abs() < 1e-12 * expect.abs().max(1.0));
            assert_eq!(r.re < 0.0, w2 > 1.0);
        }
        assert!(matches!(em.effective_density(1.0), Err(Error::Pole { .. })));
        // Modal mass equal to the total mass: the gap never closes.
        assert_eq!(em.bandgaps_x().len(), 1);
        // Half the mass resonating: negative for 1 < ω² < 2.
        let em = toy(math::sqrt(0.5));
        for w in [0.9, 1.1, 1.3, 1.45, 1.5] {
            let r = em.effective_density(w).unwrap()[0][0].re;
            assert_eq!(r < 0.0, w * w > 1.0 && w * w < 2.0);
        }
        let gaps = em.bandgaps_x();
        assert_eq!(gaps.len(), 1);
        assert!((gaps[0].0 - 1.0).abs() < 1e-12 && (gaps[0].1 - math::sqrt(2.0)).abs() < 1e-9);
    }

    #[test]
    fn damping_is_dissipative() {
        let em = EffectiveMaterial::simple(1.0, elastic_tensor(1.0, 1.0), [[0.0; 3]; 3])
            .with_resonators(vec![[1.0, 0.5], [0.3, 0.2]], vec![1.0, 4.0], Mat::from_rows(&[vec![0.2, 0.05], vec![0.05, 0.1]]))
            .unwrap();
        for w in [0.1, 0.99, 1.0, 1.7, 2.0, 5.0] {
            let r = em.effective_density(w).unwrap();
            assert!(r[0][0].im >= 0.0 && r[1][1].im >= 0.0);
            assert!((r[0][1] - r[1][0]).norm() < 1e-12);
        }
    }

    #[test]
    fn inviscid_design_has_no_modal_damping() {
        let g = StructuredGrid::new(10, 10, 0.01).unwrap();
        let mats = DesignMaterials::default();
        let frame: Vec<bool> = (0..100).map(|e| {
            let (i, j) = g.element_ij(e);
            i == 0 || j == 0 || i == 9 || j == 9
        }).collect();
        let chi: Vec<f64> = (0..400).map(|k| {
            let (i, j) = g.element_ij(k / 4);
            if (3..7).contains(&i) && (3..7).contains(&j) { 1.0 } else { 0.0 }
        }).collect();
        let f = design_field(&g, &frame, &chi, &mats).unwrap();
        let settings = HomogenizationSettings { cutoff_hz: 20000.0, ..Default::default() };
        let sys = inertial_reduction(&g, &f, &settings).unwrap();
        assert!(sys.omega_d.max_abs() == 0.0);
        assert!(!sys.q.is_empty());
        // Square-symmetric cell: modal mass of the x-coupled modes stays
        // below the total density.
        let qx2: f64 = sys.q.iter().map(|q| q[0] * q[0]).sum();
        assert!(qx2 < sys.rho_bar);
    }
}
