//! Isotropic phases, their plane-strain tensors, and the power-law mixing
//! rule used to interpolate between a dense and a soft phase.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::Voigt;
use crate::math;

pub const AIR_DENSITY: f64 = 1.2;
pub const AIR_SOUND_SPEED: f64 = 344.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPhase {
    pub name: String,
    /// kg/m³
    pub rho: f64,
    /// Bulk modulus, Pa.
    pub bulk: f64,
    /// Shear modulus, Pa.
    pub shear: f64,
    /// Deviatoric viscosity, Pa·s.
    pub mu_visc: f64,
}

impl MaterialPhase {
    pub fn new(name: &str, rho: f64, bulk: f64, shear: f64, mu_visc: f64) -> Result<Self> {
        let p = Self { name: name.into(), rho, bulk, shear, mu_visc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho >= 0.0
            && self.bulk > 0.0
            && self.shear > 0.0
            && self.mu_visc >= 0.0
            && [self.rho, self.bulk, self.shear, self.mu_visc].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMaterial(format!(
                "{}: need rho >= 0, K > 0, G > 0, mu >= 0 (got {}, {}, {}, {})",
                self.name, self.rho, self.bulk, self.shear, self.mu_visc
            )))
        }
    }

    pub fn epoxy() -> Self {
        Self { name: "epoxy".into(), rho: 1180.0, bulk: 5.49e9, shear: 1.59e9, mu_visc: 0.0 }
    }

    pub fn steel() -> Self {
        Self { name: "steel".into(), rho: 7780.0, bulk: 1.72e11, shear: 7.96e10, mu_visc: 0.0 }
    }

    pub fn rubber() -> Self {
        Self { name: "silicone_rubber".into(), rho: 1300.0, bulk: 0.63e6, shear: 0.04e6, mu_visc: 0.0 }
    }

    /// Plane-strain longitudinal modulus `K + 4G/3`.
    pub fn p_modulus(&self) -> f64 {
        self.bulk + 4.0 * self.shear / 3.0
    }

    /// Longitudinal wave speed.
    pub fn p_wave_speed(&self) -> f64 {
        math::sqrt(self.p_modulus() / self.rho)
    }

    pub fn with_viscosity(mut self, mu: f64) -> Self {
        self.mu_visc = mu;
        self
    }
}

/// Built-in phases: epoxy, steel and silicone rubber.
pub fn builtin_phases() -> Vec<MaterialPhase> {
    alloc::vec![MaterialPhase::epoxy(), MaterialPhase::steel(), MaterialPhase::rubber()]
}

pub fn find_phase<'a>(phases: &'a [MaterialPhase], name: &str) -> Option<&'a MaterialPhase> {
    phases.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// `K I⊗I + 2G I_dev`, restricted to plane strain.
pub fn elastic_tensor(bulk: f64, shear: f64) -> Voigt {
    let c11 = bulk + 4.0 * shear / 3.0;
    let c12 = bulk - 2.0 * shear / 3.0;
    [[c11, c12, 0.0], [c12, c11, 0.0], [0.0, 0.0, shear]]
}

/// `2μ I_dev` acting on strain rates (engineering shear).
pub fn viscous_tensor(mu: f64) -> Voigt {
    [[4.0 * mu / 3.0, -2.0 * mu / 3.0, 0.0], [-2.0 * mu / 3.0, 4.0 * mu / 3.0, 0.0], [0.0, 0.0, mu]]
}

pub fn isotropic_tensors(phase: &MaterialPhase) -> (Voigt, Voigt) {
    (elastic_tensor(phase.bulk, phase.shear), viscous_tensor(phase.mu_visc))
}

/// Power-law mixing `ĥ(χ) = [χ h⁺^{1/n} + (1−χ) h⁻^{1/n}]ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationScheme {
    pub exponent: f64,
    pub dense: f64,
    pub soft: f64,
}

impl InterpolationScheme {
    pub fn new(exponent: f64, dense: f64, soft: f64) -> Result<Self> {
        if !(exponent > 0.0) || dense < 0.0 || soft < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "interpolation needs n > 0 and nonnegative endpoints (n = {exponent})"
            )));
        }
        Ok(Self { exponent, dense, soft })
    }
}

/// Value and derivative of the mixing rule at `chi`.
pub fn interpolate(chi: f64, s: &InterpolationScheme) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::InvalidArgument(format!("chi = {chi} outside [0, 1]")));
    }
    Ok(interpolate_unchecked(chi, s))
}

pub(crate) fn interpolate_unchecked(chi: f64, s: &InterpolationScheme) -> (f64, f64) {
    let n = s.exponent;
    if chi == 1.0 {
        // Exact endpoint values regardless of rounding in the roots.
        let (a, b) = (math::powf(s.dense, 1.0 / n), math::powf(s.soft, 1.0 / n));
        return (s.dense, n * math::powf(s.dense, (n - 1.0) / n) * (a - b));
    }
    if chi == 0.0 {
        let (a, b) = (math::powf(s.dense, 1.0 / n), math::powf(s.soft, 1.0 / n));
        return (s.soft, n * math::powf(s.soft, (n - 1.0) / n) * (a - b));
    }
    let a = math::powf(s.dense, 1.0 / n);
    let b = math::powf(s.soft, 1.0 / n);
    let base = chi * a + (1.0 - chi) * b;
    (math::powf(base, n), n * math::powf(base, n - 1.0) * (a - b))
}

/// Interpolated properties of a two-phase mixture at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedProperties {
    pub rho: f64,
    pub d_rho: f64,
    pub stiffness: Voigt,
    pub d_stiffness: Voigt,
    pub viscosity: Voigt,
}

/// Dense/soft pair sharing one exponent for every property.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMixture {
    pub dense: MaterialPhase,
    pub soft: MaterialPhase,
    pub exponent: f64,
}

impl PhaseMixture {
    pub fn new(dense: MaterialPhase, soft: MaterialPhase, exponent: f64) -> Result<Self> {
        dense.validate()?;
        soft.validate()?;
        if !(exponent > 0.0) {
            return Err(Error::InvalidArgument(format!("interpolation exponent {exponent} must be positive")));
        }
        Ok(Self { dense, soft, exponent })
    }

    fn scheme(&self, dense: f64, soft: f64) -> InterpolationScheme {
        InterpolationScheme { exponent: self.exponent, dense, soft }
    }

    pub fn eval(&self, chi: f64) -> MixedProperties {
        let chi = chi.clamp(0.0, 1.0);
        let (rho, d_rho) = interpolate_unchecked(chi, &self.scheme(self.dense.rho, self.soft.rho));
        let (k, dk) = interpolate_unchecked(chi, &self.scheme(self.dense.bulk, self.soft.bulk));
        let (g, dg) = interpolate_unchecked(chi, &self.scheme(self.dense.shear, self.soft.shear));
        let (mu, _) = interpolate_unchecked(chi, &self.scheme(self.dense.mu_visc, self.soft.mu_visc));
        MixedProperties {
            rho,
            d_rho,
            stiffness: elastic_tensor(k, g),
            // The elastic tensor is linear in (K, G).
            d_stiffness: elastic_tensor(dk, dg),
            viscosity: viscous_tensor(mu),
        }
    }
}
