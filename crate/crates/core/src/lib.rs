//! Computational design of locally resonant acoustic metamaterials (LRAM).
//!
//! The crate covers the numerical core of the design pipeline:
//!
//! * [`fem`]: structured plane-strain Q4 meshes, assembly of mass, damping and
//!   stiffness matrices, and the kinematic constraint operators of the RVE.
//! * [`materials`]: isotropic phases, Kelvin-Voigt viscous tensors and the
//!   power-law interpolation used by the optimizer.
//! * [`modal`]: a shift-invert block Krylov eigensolver for sparse Hermitian
//!   pencils and the relevance filters for restricted/unrestricted systems.
//! * [`topopt`]: the level-set optimizer fitting a resonance and widening the
//!   associated bandgap.
//! * [`homogenize`]: effective elastic/viscous tensors and the reduced
//!   micro-inertial system of a final design.
//! * [`dispersion`]: effective-medium wavenumbers and a Bloch-Floquet oracle.
//! * [`panel`]: transmission loss of an air-coupled homogenized panel.
//!
//! The crate is `no_std` compatible (it needs `alloc`); disable the default
//! `std` feature to build without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod banded;
pub mod dense;
pub mod dispersion;
pub mod error;
pub mod fem;
pub mod homogenize;
pub mod materials;
pub mod math;
pub mod modal;
pub mod panel;
pub mod scalar;
pub mod skyline;
pub mod sparse;
pub mod topopt;

pub use error::{Error, Result};
pub use num_complex::Complex64;
