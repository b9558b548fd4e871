//! Normal-incidence transmission through a homogenized panel in air.
//!
//! The panel is a macro mesh of the effective medium, periodic in y. A unit
//! plane wave arrives from the left; with time dependence `e^{−iωt}` the air
//! fields are
//!
//! ```text
//! left:  u = e^{iκx} − R e^{−iκx},   p = −iρ_a v_a ω (e^{iκx} + R e^{−iκx})
//! right: u = T e^{iκ(x−L)}
//! ```
//!
//! so `R` is the pressure reflection and `T` the displacement transmission
//! coefficient. The face x-displacements are tied to `1 − R` and `T`, the air
//! pressure acts on them as a nodal load, and the remaining DOFs are
//! condensed out to a complex 2×2 system.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::banded::BandMatrix;
use crate::dense::Mat;
use crate::dispersion::frequency_samples;
use crate::error::{Error, Result};
use crate::fem::{assemble, MaterialField, StructuredGrid};
use crate::homogenize::EffectiveMaterial;
use crate::materials::{AIR_DENSITY, AIR_SOUND_SPEED};
use crate::math;
use crate::sparse::CsrMatrix;
use crate::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Single homogenized layer between two air half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelModel {
    /// Effective material at unit viscosity scale.
    pub material: EffectiveMaterial,
    /// Multiplier on the viscous terms (`η_eff`, `Ω_D`).
    pub viscosity: f64,
    /// Thickness L along x (m).
    pub thickness: f64,
    /// Height of the periodic strip (m); also the area per unit depth.
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub air_density: f64,
    pub air_speed: f64,
    pub f_max_hz: f64,
    pub samples: usize,
}

impl PanelModel {
    /// `cells` unit cells of size `cell_size` through the thickness, 4×4
    /// quads per cell.
    pub fn new(material: EffectiveMaterial, cells: usize, cell_size: f64) -> Result<Self> {
        if cells == 0 || !(cell_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "panel needs at least one cell of positive size (got {cells} × {cell_size})"
            )));
        }
        Ok(Self {
            material,
            viscosity: 1.0,
            thickness: cells as f64 * cell_size,
            height: cell_size,
            nx: 4 * cells,
            ny: 4,
            air_density: AIR_DENSITY,
            air_speed: AIR_SOUND_SPEED,
            f_max_hz: 3000.0,
            samples: 600,
        })
    }

    pub fn with_viscosity(mut self, mu: f64) -> Self {
        self.viscosity = mu;
        self
    }

    pub fn with_mesh(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self
    }

    /// Refines x so that the quasi-static wavelength at `f_max_hz` spans at
    /// least `per_wavelength` elements. Never coarsens.
    pub fn with_wavelength_resolution(mut self, per_wavelength: f64) -> Self {
        let c = math::sqrt(self.material.c_eff[0][0] / self.material.rho_bar);
        let need = per_wavelength * self.thickness * self.f_max_hz / c;
        if need.is_finite() && need > self.nx as f64 {
            self.nx = libm::ceil(need) as usize;
        }
        self
    }

    /// Effective material with the viscosity multiplier applied.
    pub fn effective(&self) -> EffectiveMaterial {
        self.material.with_viscosity_factor(self.viscosity)
    }

    fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidArgument("panel dimensions must be positive".into()));
        }
        if self.ny < 1 || self.nx < 1 {
            return Err(Error::InvalidArgument("panel mesh needs at least one element per side".into()));
        }
        if !(self.air_density > 0.0 && self.air_speed > 0.0) {
            return Err(Error::InvalidMaterial("air constants must be positive".into()));
        }
        if !(self.viscosity >= 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity factor {} is negative", self.viscosity)));
        }
        Ok(())
    }

    /// Frequency grid for sweeps: `samples` points up to `f_max_hz`, nudged
    /// off the undamped resonances.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        let poles: Vec<f64> = self.material.omega2.iter().map(|w2| math::rad_to_hz(math::sqrt(*w2))).collect();
        frequency_samples(self.f_max_hz, self.samples, &poles)
    }

    /// Frequency-independent macro matrices.
    pub fn prepare(&self) -> Result<MacroSystem> {
        self.validate()?;
        let em = self.effective();
        let grid = StructuredGrid::rectangular(self.nx, self.ny, self.thickness, self.height)?;
        let field = MaterialField::uniform(&grid, 1.0, em.c_eff, em.eta_eff);
        let sys = assemble(&grid, &field)?;
        Ok(MacroSystem {
            material: em,
            grid,
            stiffness: sys.stiffness,
            damping: sys.damping,
            unit_mass: sys.mass,
            air_density: self.air_density,
            air_speed: self.air_speed,
        })
    }
}

/// Macro stiffness, damping and unit-density mass of a panel.
#[derive(Debug, Clone)]
pub struct MacroSystem {
    pub material: EffectiveMaterial,
    pub grid: StructuredGrid,
    pub stiffness: CsrMatrix<f64>,
    pub damping: CsrMatrix<f64>,
    pub unit_mass: CsrMatrix<f64>,
    air_density: f64,
    air_speed: f64,
}

impl MacroSystem {
    /// `D(ω) = K − iωC − ω² M(ω)`, with `M` built from the effective density
    /// tensor.
    pub fn dynamic_matrix(&self, omega: f64) -> Result<CsrMatrix<Complex64>> {
        let rho = if omega == 0.0 {
            [[Complex64::new(0.0, 0.0); 2]; 2]
        } else {
            self.material.effective_density(omega)?
        };
        let n = self.grid.num_dofs();
        let mut trip: Vec<(usize, usize, Complex64)> = Vec::with_capacity(3 * self.stiffness.nnz());
        for r in 0..n {
            let (cols, vals) = self.stiffness.row(r);
            trip.extend(cols.iter().zip(vals).map(|(c, v)| (r, *c, Complex64::new(*v, 0.0))));
            let (cols, vals) = self.damping.row(r);
            trip.extend(cols.iter().zip(vals).map(|(c, v)| (r, *c, Complex64::new(0.0, -omega * v))));
            if r % 2 == 0 {
                // The unit mass is the same scalar block in both directions.
                let (cols, vals) = self.unit_mass.row(r);
                for (c, v) in cols.iter().zip(vals).filter(|(c, _)| *c % 2 == 0) {
                    for d in 0..2 {
                        for e in 0..2 {
                            trip.push((r + d, c + e, rho[d][e] * (-omega * omega * v)));
                        }
                    }
                }
            }
        }
        Ok(CsrMatrix::from_triplets(n, n, &trip))
    }

    /// Reflection and transmission at `omega` (rad/s).
    pub fn solve_rt(&self, omega: f64) -> Result<(Complex64, Complex64)> {
        if !(omega > 0.0) {
            return Err(Error::InvalidArgument(format!("frequency {omega} must be positive")));
        }
        let freq = math::rad_to_hz(omega);
        let d = self.dynamic_matrix(omega)?;
        let (nx, ny) = (self.grid.nx(), self.grid.ny());

        // Each full DOF maps to (unknown, weight, prescribed part). Free
        // unknowns are numbered column by column to keep the band narrow;
        // R and T are the two border unknowns.
        let mut free = vec![usize::MAX; self.grid.num_dofs()];
        let mut n = 0;
        for i in 0..=nx {
            for j in 0..ny {
                let node = self.grid.node(i, j);
                if i != 0 && i != nx {
                    free[2 * node] = n;
                    n += 1;
                }
                free[2 * node + 1] = n;
                n += 1;
            }
        }
        let (ir, it) = (n, n + 1);
        let slot = |dof: usize| -> (usize, f64, f64) {
            let (i, j) = self.grid.node_ij(dof / 2);
            let node = self.grid.node(i, j % ny);
            let dir = dof % 2;
            match (dir, i) {
                (0, 0) => (ir, -1.0, 1.0),
                (0, i) if i == nx => (it, 1.0, 0.0),
                _ => (free[2 * node + dir], 1.0, 0.0),
            }
        };

        let mut entries = Vec::with_capacity(d.nnz());
        let (mut lower, mut upper) = (0usize, 0usize);
        for r in 0..d.nrows() {
            let (sr, wr, _) = slot(r);
            let (cols, vals) = d.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let (sc, wc, u0) = slot(*c);
                entries.push((sr, sc, wr, wc, u0, *v));
                if sr < n && sc < n {
                    lower = lower.max(sr.saturating_sub(sc));
                    upper = upper.max(sc.saturating_sub(sr));
                }
            }
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut aff = BandMatrix::zeros(n, lower, upper);
        // Columns: coupling to R, coupling to T, load.
        let mut rhs = Mat::<Complex64>::zeros(n, 3);
        let mut abf = [vec![zero; n], vec![zero; n]];
        let mut abb = Mat::<Complex64>::zeros(2, 2);
        let mut bb = [zero; 2];
        for (sr, sc, wr, wc, u0, v) in entries {
            let a = v * (wr * wc);
            let load = -v * (wr * u0);
            match (sr < n, sc < n) {
                (true, true) => aff.add(sr, sc, a),
                (true, false) => rhs[(sr, sc - n)] += a,
                (false, true) => abf[sr - n][sc] += a,
                (false, false) => abb[(sr - n, sc - n)] += a,
            }
            if u0 != 0.0 {
                if sr < n {
                    rhs[(sr, 2)] += load;
                } else {
                    bb[sr - n] += load;
                }
            }
        }
        // Air loads: −iK_a(1 + R) on the left face, +iK_a T on the right.
        let ka = self.air_density * self.air_speed * omega * self.grid.extent()[1];
        abb[(0, 0)] -= I * ka;
        bb[0] += I * ka;
        abb[(1, 1)] -= I * ka;

        let x = aff.solve(&rhs).map_err(|_| Error::ResonanceSingularity { frequency_hz: freq })?;
        let mut s = abb;
        let mut g = Mat::from_fn(2, 1, |p, _| bb[p]);
        for p in 0..2 {
            for k in 0..n {
                let apk = abf[p][k];
                if apk == zero {
                    continue;
                }
                for q in 0..2 {
                    s[(p, q)] -= apk * x[(k, q)];
                }
                g[(p, 0)] -= apk * x[(k, 2)];
            }
        }
        let rt = s.solve(&g).map_err(|_| Error::ResonanceSingularity { frequency_hz: freq })?;
        Ok((rt[(0, 0)], rt[(1, 0)]))
    }
}

/// `D(ω)` of the panel's macro mesh.
pub fn assemble_macro(panel: &PanelModel, omega: f64) -> Result<CsrMatrix<Complex64>> {
    panel.prepare()?.dynamic_matrix(omega)
}

/// `(R, T)` of the panel at `omega` (rad/s).
pub fn solve_rt(panel: &PanelModel, omega: f64) -> Result<(Complex64, Complex64)> {
    panel.prepare()?.solve_rt(omega)
}

pub fn transmission_loss_db(t: Complex64) -> f64 {
    -20.0 * math::log10(t.norm())
}

/// Transmission curve over a frequency sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TLResult {
    pub frequency_hz: Vec<f64>,
    pub r: Vec<Complex64>,
    pub t: Vec<Complex64>,
    pub tl_db: Vec<f64>,
    /// Samples that could not be solved.
    pub failures: Vec<(f64, Error)>,
}

impl TLResult {
    /// Collects per-sample results in frequency order.
    pub fn from_samples(samples: impl IntoIterator<Item = (f64, Result<(Complex64, Complex64)>)>) -> Self {
        let mut out = Self::default();
        for (f, res) in samples {
            match res {
                Ok((r, t)) => {
                    out.frequency_hz.push(f);
                    out.r.push(r);
                    out.t.push(t);
                    out.tl_db.push(transmission_loss_db(t));
                }
                Err(e) => out.failures.push((f, e)),
            }
        }
        out
    }

    /// First uninterrupted run of samples with TL above `threshold_db`, as
    /// `(first, last)` frequencies in Hz.
    pub fn first_band_above(&self, threshold_db: f64) -> Option<(f64, f64)> {
        let start = self.tl_db.iter().position(|tl| *tl > threshold_db)?;
        let len = self.tl_db[start..].iter().take_while(|tl| **tl > threshold_db).count();
        Some((self.frequency_hz[start], self.frequency_hz[start + len - 1]))
    }

    /// Largest `|R|² + |T|² − 1` over the sweep.
    pub fn max_energy_excess(&self) -> f64 {
        self.r.iter().zip(&self.t).map(|(r, t)| r.norm_sqr() + t.norm_sqr() - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sequential sweep over [`PanelModel::frequencies`].
pub fn tl_sweep(panel: &PanelModel) -> Result<TLResult> {
    let sys = panel.prepare()?;
    let freqs = panel.frequencies()?;
    Ok(TLResult::from_samples(freqs.into_iter().map(|f| (f, sys.solve_rt(math::hz_to_rad(f))))))
}

/// Closed-form `(R, T)` for a homogeneous layer of density `rho`, P-wave
/// modulus `modulus` and thickness `thickness`, same conventions as the FE
/// panel.
pub fn layer_rt(rho: f64, modulus: f64, thickness: f64, omega: f64, air_density: f64, air_speed: f64) -> (Complex64, Complex64) {
    let c = math::sqrt(modulus / rho);
    let z = rho * c / (air_density * air_speed);
    let kl = omega / c * thickness;
    let (s, co) = (math::sin(kl), math::cos(kl));
    let den = Complex64::new(co, -0.5 * (z + 1.0 / z) * s);
    let r = Complex64::new(0.0, -0.5 * (z - 1.0 / z) * s) / den;
    (r, den.inv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialPhase;

    fn steel_panel() -> PanelModel {
        PanelModel::new(EffectiveMaterial::from_phase(&MaterialPhase::steel()), 1, 0.01).unwrap()
    }

    #[test]
    fn air_wavenumber() {
        let k = math::hz_to_rad(1000.0) / AIR_SOUND_SPEED;
        assert!((k - 18.265).abs() < 1e-3);
    }

    #[test]
    fn static_matrix_is_stiffness() {
        let p = steel_panel();
        let sys = p.prepare().unwrap();
        let d = sys.dynamic_matrix(0.0).unwrap();
        for r in 0..d.nrows() {
            let (cols, vals) = d.row(r);
            for (c, v) in cols.iter().zip(vals) {
                assert_eq!(v.re, sys.stiffness.get(r, *c));
                assert_eq!(v.im, 0.0);
            }
        }
    }

    #[test]
    fn elastic_matrix_symmetric_real() {
        let sys = steel_panel().prepare().unwrap();
        let d = sys.dynamic_matrix(1000.0).unwrap();
        let scale = d.values().iter().fold(0.0f64, |a, v| a.max(v.norm()));
        for r in 0..d.nrows() {
            let (cols, vals) = d.row(r);
            for (c, v) in cols.iter().zip(vals) {
                assert_eq!(v.im, 0.0);
                assert!((d.get(*c, r) - v).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn air_panel_is_transparent() {
        let rho = AIR_DENSITY;
        let modulus = rho * AIR_SOUND_SPEED * AIR_SOUND_SPEED;
        let em = EffectiveMaterial::simple(rho, [[modulus, 0.0, 0.0], [0.0, modulus, 0.0], [0.0, 0.0, 0.0]], [[0.0; 3]; 3]);
        let p = PanelModel::new(em, 1, 0.01).unwrap().with_mesh(64, 2);
        let (r, t) = solve_rt(&p, math::hz_to_rad(200.0)).unwrap();
        assert!(r.norm() < 1e-6, "{r}");
        assert!((t.norm() - 1.0).abs() < 1e-6, "{t}");
    }

    #[test]
    fn steel_matches_layer_solution() {
        let p = steel_panel();
        let steel = MaterialPhase::steel();
        let w = math::hz_to_rad(1000.0);
        let (r, t) = solve_rt(&p, w).unwrap();
        let (r0, t0) = layer_rt(steel.rho, steel.p_modulus(), 0.01, w, AIR_DENSITY, AIR_SOUND_SPEED);
        assert!((transmission_loss_db(t) - transmission_loss_db(t0)).abs() < 0.1);
        assert!((transmission_loss_db(t) - 55.0).abs() < 1.5);
        assert!((r - r0).norm() < 1e-3, "{r} {r0} {t} {t0}");
        assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn damped_panel_loses_energy() {
        let em = EffectiveMaterial::from_phase(&MaterialPhase::rubber().with_viscosity(10.0));
        let p = PanelModel::new(em, 1, 0.01).unwrap();
        let (r, t) = solve_rt(&p, math::hz_to_rad(2000.0)).unwrap();
        assert!(r.norm_sqr() + t.norm_sqr() < 1.0 - 1e-6);
    }

    #[test]
    fn band_detection() {
        let res = TLResult::from_samples(
            [(1.0, 0.5), (2.0, 0.001), (3.0, 0.002), (4.0, 0.5), (5.0, 0.001)]
                .map(|(f, t)| (f, Ok((Complex64::new(0.0, 0.0), Complex64::new(t, 0.0))))),
        );
        assert_eq!(res.first_band_above(40.0), Some((2.0, 3.0)));
        assert_eq!(res.first_band_above(80.0), None);
    }
}
