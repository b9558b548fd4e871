use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::element::{self, Voigt};
use super::grid::StructuredGrid;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Material properties sampled at the Gauss points, indexed `4·e + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub density: Vec<f64>,
    pub stiffness: Vec<Voigt>,
    pub viscosity: Vec<Voigt>,
}

impl MaterialField {
    pub fn uniform(grid: &StructuredGrid, density: f64, stiffness: Voigt, viscosity: Voigt) -> Self {
        let n = 4 * grid.num_elements();
        Self { density: vec![density; n], stiffness: vec![stiffness; n], viscosity: vec![viscosity; n] }
    }

    /// Evaluates `f(point)` at every Gauss point.
    pub fn from_fn(grid: &StructuredGrid, f: impl Fn([f64; 2]) -> (f64, Voigt, Voigt)) -> Self {
        let n = 4 * grid.num_elements();
        let mut out = Self {
            density: Vec::with_capacity(n),
            stiffness: Vec::with_capacity(n),
            viscosity: Vec::with_capacity(n),
        };
        for e in 0..grid.num_elements() {
            for p in grid.gauss_points(e) {
                let (r, c, v) = f(p);
                out.density.push(r);
                out.stiffness.push(c);
                out.viscosity.push(v);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn has_viscosity(&self) -> bool {
        self.viscosity.iter().any(|v| v.iter().flatten().any(|x| *x != 0.0))
    }

    /// Volume average of the density.
    pub fn mean_density(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.density.len() as f64
    }

    fn check(&self, grid: &StructuredGrid) -> Result<()> {
        let n = 4 * grid.num_elements();
        if self.density.len() != n || self.stiffness.len() != n || self.viscosity.len() != n {
            return Err(Error::InvalidArgument(format!(
                "material field has {} points, grid needs {n}",
                self.density.len()
            )));
        }
        for (k, r) in self.density.iter().enumerate() {
            if !(*r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidMaterial(format!("density {r} at Gauss point {k}")));
            }
        }
        for (k, c) in self.stiffness.iter().enumerate() {
            if !is_sym_psd(c) {
                return Err(Error::InvalidMaterial(format!("stiffness not symmetric PSD at Gauss point {k}")));
            }
        }
        for (k, c) in self.viscosity.iter().enumerate() {
            if !is_sym_psd(c) {
                return Err(Error::InvalidMaterial(format!("viscosity not symmetric PSD at Gauss point {k}")));
            }
        }
        Ok(())
    }
}

/// Symmetric and positive semidefinite up to rounding.
pub fn is_sym_psd(c: &Voigt) -> bool {
    let scale = c.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if !c.iter().flatten().all(|x| x.is_finite()) {
        return false;
    }
    if scale == 0.0 {
        return true;
    }
    let tol = 1e-10 * scale;
    for i in 0..3 {
        for j in 0..i {
            if (c[i][j] - c[j][i]).abs() > tol {
                return false;
            }
        }
    }
    // All principal minors nonnegative.
    let d = |i: usize, j: usize| c[i][i] * c[j][j] - c[i][j] * c[j][i];
    let det = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
        + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
    (0..3).all(|i| c[i][i] >= -tol)
        && d(0, 1) >= -tol * scale
        && d(0, 2) >= -tol * scale
        && d(1, 2) >= -tol * scale
        && det >= -tol * scale * scale
}

/// Global mass, damping and stiffness matrices on a shared pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub mass: CsrMatrix<f64>,
    pub damping: CsrMatrix<f64>,
    pub stiffness: CsrMatrix<f64>,
}

/// Structural pattern of the nodal 9-point stencil, two DOFs per node.
pub fn pattern(grid: &StructuredGrid) -> CsrMatrix<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut rows = Vec::with_capacity(grid.num_dofs());
    for n in 0..grid.num_nodes() {
        let (i, j) = grid.node_ij(n);
        let mut cols = Vec::with_capacity(18);
        for jj in j.saturating_sub(1)..=(j + 1).min(ny) {
            for ii in i.saturating_sub(1)..=(i + 1).min(nx) {
                let m = grid.node(ii, jj);
                cols.push(2 * m);
                cols.push(2 * m + 1);
            }
        }
        rows.push(cols.clone());
        rows.push(cols);
    }
    CsrMatrix::with_pattern(grid.num_dofs(), grid.num_dofs(), &rows)
}

/// Assembles `M`, `C`, `K` from Gauss-point properties.
pub fn assemble(grid: &StructuredGrid, field: &MaterialField) -> Result<SystemMatrices> {
    field.check(grid)?;
    let h = grid.element_size();
    let base = pattern(grid);
    let mut m = base.clone();
    let mut c = base.clone();
    let mut k = base;
    let viscous = field.has_viscosity();
    for e in 0..grid.num_elements() {
        let dofs = grid.element_dofs(e);
        let at = |g: usize| 4 * e + g;
        let rho: [f64; 4] = core::array::from_fn(|g| field.density[at(g)]);
        let cs: [Voigt; 4] = core::array::from_fn(|g| field.stiffness[at(g)]);
        let ke = element::stiffness(h, &cs);
        let me = element::mass(h, &rho);
        let ce = if viscous {
            let vs: [Voigt; 4] = core::array::from_fn(|g| field.viscosity[at(g)]);
            Some(element::stiffness(h, &vs))
        } else {
            None
        };
        for p in 0..8 {
            for q in 0..8 {
                let pos = k.position(dofs[p], dofs[q]).expect("element entry in pattern");
                k.values_mut()[pos] += ke[p][q];
                m.values_mut()[pos] += me[p][q];
                if let Some(ce) = &ce {
                    c.values_mut()[pos] += ce[p][q];
                }
            }
        }
    }
    Ok(SystemMatrices { mass: m, damping: c, stiffness: k })
}
