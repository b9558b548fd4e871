//! Plane-wave dispersion along x: the effective-medium wavenumber `κ(ω)` of
//! a homogenized material and a Bloch-Floquet oracle on the full RVE.

use alloc::format;
use alloc::vec::Vec;

use crate::dense::{hermitian_eigen, Mat};
use crate::error::{Error, Result};
use crate::fem::{assemble, bloch_projection, MaterialField, StructuredGrid};
use crate::homogenize::EffectiveMaterial;
use crate::math;
use crate::modal::{solve_smallest, EigenSettings};
use crate::scalar::dot;
use crate::Complex64;

/// Sampled complex wavenumber, normalized as `κ ℓ / π`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionCurve {
    pub frequency_hz: Vec<f64>,
    pub k_norm: Vec<Complex64>,
    pub cell_size: f64,
}

impl DispersionCurve {
    pub fn len(&self) -> usize {
        self.frequency_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency_hz.is_empty()
    }

    /// Maximal runs of samples where the wave is evanescent
    /// (`Im κ > |Re κ|`), as `(first, last)` frequencies in Hz.
    pub fn attenuation_bands(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        let mut last = 0.0;
        for (f, k) in self.frequency_hz.iter().zip(&self.k_norm) {
            let evanescent = k.im > k.re.abs();
            match (evanescent, start) {
                (true, None) => start = Some(*f),
                (false, Some(s)) => {
                    out.push((s, last));
                    start = None;
                }
                _ => {}
            }
            last = *f;
        }
        if let Some(s) = start {
            out.push((s, last));
        }
        out
    }
}

/// `n` uniform samples `f_max (i + 1) / n`, moved 0.1 Hz away from any pole
/// closer than that.
pub fn frequency_samples(f_max_hz: f64, n: usize, poles_hz: &[f64]) -> Result<Vec<f64>> {
    if n == 0 || !(f_max_hz > 0.0) {
        return Err(Error::InvalidArgument(format!("need n > 0 and f_max > 0 (got {n}, {f_max_hz})")));
    }
    let nudge = 0.1;
    Ok((0..n)
        .map(|i| {
            let mut f = f_max_hz * (i + 1) as f64 / n as f64;
            for p in poles_hz {
                if (f - p).abs() < nudge {
                    f = if f >= *p { p + nudge } else { p - nudge };
                }
            }
            f
        })
        .collect())
}

fn decaying_root(z: Complex64) -> Complex64 {
    let r = z.sqrt();
    if r.im < 0.0 || (r.im == 0.0 && r.re < 0.0) {
        -r
    } else {
        r
    }
}

/// `κ = ω √(ρ_xx(ω) / (C₁₁ − iωη₁₁))` with `Im κ ≥ 0`, rad/m.
pub fn effective_wavenumber(em: &EffectiveMaterial, omega: f64) -> Result<Complex64> {
    if omega == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let rho = em.effective_density(omega)?[0][0];
    let modulus = Complex64::new(em.c_eff[0][0], -omega * em.eta_eff[0][0]);
    Ok(decaying_root(rho / modulus) * omega)
}

/// Effective-medium dispersion over the given frequencies (Hz).
///
/// Where `Im κ` vanishes the sign of the real root follows the previous
/// sample.
pub fn effective_dispersion(em: &EffectiveMaterial, frequencies_hz: &[f64], cell_size: f64) -> Result<DispersionCurve> {
    if !(cell_size > 0.0) {
        return Err(Error::InvalidArgument(format!("cell size {cell_size} must be positive")));
    }
    let mut k_norm: Vec<Complex64> = Vec::with_capacity(frequencies_hz.len());
    for &f in frequencies_hz {
        let mut k = effective_wavenumber(em, math::hz_to_rad(f))? * (cell_size / core::f64::consts::PI);
        if let Some(prev) = k_norm.last() {
            if k.im.abs() <= 1e-12 * k.norm() && (-k - prev).norm() < (k - prev).norm() {
                k = -k;
            }
        }
        k_norm.push(k);
    }
    Ok(DispersionCurve { frequency_hz: frequencies_hz.to_vec(), k_norm, cell_size })
}

/// Bloch-Floquet frequencies at one wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochSample {
    /// rad/m
    pub kappa: f64,
    /// Ascending, Hz.
    pub frequency_hz: Vec<f64>,
    /// `⟨φ, Sφ⟩_M` for the mirror `S: y ↦ ℓ − y`; +1 for modes with even
    /// `u_x` (longitudinal family), −1 for odd.
    pub parity: Vec<f64>,
}

/// Lowest `count` Bloch frequencies for a wave `e^{iκx}` along x, periodic
/// in y. Viscosity is ignored.
pub fn bloch_frequencies(
    grid: &StructuredGrid,
    field: &MaterialField,
    kappa: f64,
    count: usize,
    settings: &EigenSettings,
) -> Result<BlochSample> {
    let sys = assemble(grid, field)?;
    let proj = bloch_projection(grid, kappa);
    let mirror = mirror_map(grid);
    let k = proj.reduce(&sys.stiffness.map(|v| Complex64::new(v, 0.0)));
    let m = proj.reduce(&sys.mass.map(|v| Complex64::new(v, 0.0)));
    let sol = solve_smallest(&k, &m, count, settings)?;
    let images: Vec<Vec<Complex64>> = sol
        .modes
        .iter()
        .map(|phi| m.mul_vec(&mirror.iter().map(|(src, sign)| phi[*src] * *sign).collect::<Vec<_>>()))
        .collect();
    // Degenerate clusters (e.g. the two rigid translations at κ = 0) mix
    // parities, so S is diagonalized inside each cluster.
    let lam = &sol.eigenvalues;
    let scale = lam.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mut parity = Vec::with_capacity(sol.len());
    let mut start = 0;
    while start < lam.len() {
        let mut end = start + 1;
        while end < lam.len() && (lam[end] - lam[start]).abs() <= 1e-6 * lam[start].abs().max(1e-6 * scale) {
            end += 1;
        }
        let s = Mat::from_fn(end - start, end - start, |a, b| dot(&sol.modes[start + a], &images[start + b]));
        let (values, _) = hermitian_eigen(&s);
        parity.extend(values.into_iter().rev());
        start = end;
    }
    Ok(BlochSample {
        kappa,
        frequency_hz: sol.eigenvalues.iter().map(|l| math::rad_to_hz(math::sqrt(l.max(0.0)))).collect(),
        parity,
    })
}

// Reduced Bloch DOF -> (source DOF, sign) under (u_x, u_y)(x, y) -> (u_x, -u_y)(x, ℓ - y).
fn mirror_map(grid: &StructuredGrid) -> Vec<(usize, f64)> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = Vec::with_capacity(2 * nx * ny);
    for mj in 0..ny {
        for mi in 0..nx {
            let src = 2 * (((ny - mj) % ny) * nx + mi);
            out.push((src, 1.0));
            out.push((src + 1, -1.0));
        }
    }
    out
}

/// Bloch frequencies over a list of wavenumbers (rad/m).
pub fn bloch_oracle(
    grid: &StructuredGrid,
    field: &MaterialField,
    kappas: &[f64],
    count: usize,
    settings: &EigenSettings,
) -> Result<Vec<BlochSample>> {
    kappas.iter().map(|k| bloch_frequencies(grid, field, *k, count, settings)).collect()
}

/// First gap of the even (longitudinal) family: the maximum over κ of the
/// lowest even branch and the minimum over κ of the second, in Hz.
pub fn bloch_gap_even(samples: &[BlochSample]) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for s in samples {
        let even: Vec<f64> =
            s.frequency_hz.iter().zip(&s.parity).filter(|(_, p)| **p > 0.0).map(|(f, _)| *f).collect();
        if even.len() < 2 {
            return None;
        }
        // At κ = 0 the lowest even mode is the rigid translation.
        lo = lo.max(even[0]);
        hi = hi.min(even[1]);
    }
    (hi > lo).then_some((lo, hi))
}
