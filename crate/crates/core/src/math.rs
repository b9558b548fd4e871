//! Float functions routed through `libm` so the crate builds without `std`.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// Hz to rad/s.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

/// rad/s to Hz.
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}
