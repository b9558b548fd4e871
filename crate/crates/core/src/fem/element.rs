//! Bilinear rectangular (Q4) plane-strain element with 2×2 Gauss quadrature.
//!
//! Local node order is counter-clockwise from the bottom-left corner; local
//! DOFs interleave `(x, y)` per node. Strains use Voigt order
//! `(εxx, εyy, γxy)` with engineering shear.

/// 3×3 plane-strain constitutive matrix in Voigt notation.
pub type Voigt = [[f64; 3]; 3];

/// 8×8 element block.
pub type Block = [[f64; 8]; 8];

const G: f64 = 0.577_350_269_189_625_8;

/// Natural coordinates of the Gauss points, ordered like the element nodes.
pub const GAUSS: [[f64; 2]; 4] = [[-G, -G], [G, -G], [G, G], [-G, G]];

const NODE_SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Shape function values at natural coordinates `(xi, eta)`.
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    core::array::from_fn(|a| {
        let [sx, sy] = NODE_SIGNS[a];
        0.25 * (1.0 + sx * xi) * (1.0 + sy * eta)
    })
}

/// Physical gradients `[∂N/∂x, ∂N/∂y]` for an element of size `h`.
pub fn shape_grad(xi: f64, eta: f64, h: [f64; 2]) -> [[f64; 2]; 4] {
    core::array::from_fn(|a| {
        let [sx, sy] = NODE_SIGNS[a];
        [0.5 * sx * (1.0 + sy * eta) / h[0], 0.5 * sy * (1.0 + sx * xi) / h[1]]
    })
}

/// Strain-displacement matrix `B` (3×8).
pub fn strain_matrix(xi: f64, eta: f64, h: [f64; 2]) -> [[f64; 8]; 3] {
    let d = shape_grad(xi, eta, h);
    let mut b = [[0.0; 8]; 3];
    for a in 0..4 {
        b[0][2 * a] = d[a][0];
        b[1][2 * a + 1] = d[a][1];
        b[2][2 * a] = d[a][1];
        b[2][2 * a + 1] = d[a][0];
    }
    b
}

/// Quadrature weight times Jacobian determinant (same for every point).
pub fn gauss_weight(h: [f64; 2]) -> f64 {
    0.25 * h[0] * h[1]
}

/// `Σ_g Bᵀ D_g B w` with one constitutive matrix per Gauss point.
pub fn stiffness(h: [f64; 2], d: &[Voigt; 4]) -> Block {
    let w = gauss_weight(h);
    let mut k = [[0.0; 8]; 8];
    for (g, dg) in GAUSS.iter().zip(d) {
        let b = strain_matrix(g[0], g[1], h);
        // db = D B
        let mut db = [[0.0; 8]; 3];
        for i in 0..3 {
            for j in 0..8 {
                db[i][j] = (0..3).map(|m| dg[i][m] * b[m][j]).sum();
            }
        }
        for p in 0..8 {
            for q in 0..8 {
                k[p][q] += w * (0..3).map(|m| b[m][p] * db[m][q]).sum::<f64>();
            }
        }
    }
    k
}

/// `∫ N_a N_b ρ dA` weighted per Gauss point, as 4×4 nodal products.
pub fn shape_products(h: [f64; 2], rho: &[f64; 4]) -> [[f64; 4]; 4] {
    let w = gauss_weight(h);
    let mut m = [[0.0; 4]; 4];
    for (g, r) in GAUSS.iter().zip(rho) {
        let n = shape(g[0], g[1]);
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += w * r * n[a] * n[b];
            }
        }
    }
    m
}

/// Consistent mass block.
pub fn mass(h: [f64; 2], rho: &[f64; 4]) -> Block {
    let s = shape_products(h, rho);
    let mut m = [[0.0; 8]; 8];
    for a in 0..4 {
        for b in 0..4 {
            m[2 * a][2 * b] = s[a][b];
            m[2 * a + 1][2 * b + 1] = s[a][b];
        }
    }
    m
}

/// `∫ N_a dA`.
pub fn shape_integrals(h: [f64; 2]) -> [f64; 4] {
    // Each bilinear shape function integrates to a quarter of the area.
    [0.25 * h[0] * h[1]; 4]
}

/// `∫ B dA` (3×8).
pub fn strain_integral(h: [f64; 2]) -> [[f64; 8]; 3] {
    let w = gauss_weight(h);
    let mut out = [[0.0; 8]; 3];
    for g in GAUSS {
        let b = strain_matrix(g[0], g[1], h);
        for i in 0..3 {
            for j in 0..8 {
                out[i][j] += w * b[i][j];
            }
        }
    }
    out
}

/// Strain at natural coordinates from element displacements.
pub fn strain_at(xi: f64, eta: f64, h: [f64; 2], u: &[f64; 8]) -> [f64; 3] {
    let b = strain_matrix(xi, eta, h);
    core::array::from_fn(|i| (0..8).map(|j| b[i][j] * u[j]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use nalgebra::{DMatrix, SMatrix};

    fn unit_d() -> Voigt {
        // E = 1, ν = 0.25 plane strain
        let (e, nu) = (1.0, 0.25);
        let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        [[f * (1.0 - nu), f * nu, 0.0], [f * nu, f * (1.0 - nu), 0.0], [0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0]]
    }

    /// Closed-form unit-square Q4 stiffness (thickness 1) for isotropic
    /// plane strain, written from the standard coefficient table.
    fn hand_assembled(d: &Voigt) -> SMatrix<f64, 8, 8> {
        let (a, b, c) = (d[0][0], d[0][1], d[2][2]);
        // Integrals over the unit square of products of shape gradients.
        // xx: ∫ ∂Na/∂x ∂Nb/∂x ; yy likewise; xy: ∫ ∂Na/∂x ∂Nb/∂y.
        let xx = [
            [1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0],
            [-1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0],
            [-1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0],
            [1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0],
        ];
        let yy = [
            [1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
            [1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
            [-1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            [-1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
        ];
        let xy = [
            [0.25, 0.25, -0.25, -0.25],
            [-0.25, -0.25, 0.25, 0.25],
            [-0.25, -0.25, 0.25, 0.25],
            [0.25, 0.25, -0.25, -0.25],
        ];
        let mut k = SMatrix::<f64, 8, 8>::zeros();
        for p in 0..4 {
            for q in 0..4 {
                k[(2 * p, 2 * q)] = a * xx[p][q] + c * yy[p][q];
                k[(2 * p + 1, 2 * q + 1)] = a * yy[p][q] + c * xx[p][q];
                k[(2 * p, 2 * q + 1)] = b * xy[p][q] + c * xy[q][p];
                k[(2 * p + 1, 2 * q)] = b * xy[q][p] + c * xy[p][q];
            }
        }
        k
    }

    #[test]
    fn single_element_matches_hand_assembly() {
        let d = unit_d();
        let k = stiffness([1.0, 1.0], &[d; 4]);
        let km = SMatrix::<f64, 8, 8>::from_fn(|i, j| k[i][j]);
        let hand = hand_assembled(&d);
        assert!((km - hand).abs().max() < 1e-14);
        let mut ev: Vec<f64> = km.symmetric_eigenvalues().iter().copied().collect();
        let mut evh: Vec<f64> = hand.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        evh.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&evh) {
            assert!((a - b).abs() < 1e-13);
        }
        // Nullity 3: two translations and a rotation.
        assert_eq!(ev.iter().filter(|v| v.abs() < 1e-12).count(), 3);
    }

    #[test]
    fn blocks_are_symmetric() {
        let d = unit_d();
        let k = stiffness([0.3, 0.7], &[d; 4]);
        let m = mass([0.3, 0.7], &[2.0, 1.0, 3.0, 4.0]);
        for i in 0..8 {
            for j in 0..8 {
                assert!((k[i][j] - k[j][i]).abs() < 1e-14);
                assert!((m[i][j] - m[j][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn consistent_mass_of_unit_square() {
        let m = mass([1.0, 1.0], &[1.0; 4]);
        let mm = DMatrix::from_fn(8, 8, |i, j| m[i][j]);
        // Standard consistent mass: (1/36) [4 2 1 2; ...]
        assert!((mm[(0, 0)] - 4.0 / 36.0).abs() < 1e-15);
        assert!((mm[(0, 2)] - 2.0 / 36.0).abs() < 1e-15);
        assert!((mm[(0, 4)] - 1.0 / 36.0).abs() < 1e-15);
        let total: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| m[2 * a][2 * b]).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strain_integral_of_linear_field() {
        let h = [0.2, 0.5];
        // u = (2x + 3y, -x + 5y) at nodes (0,0),(h0,0),(h0,h1),(0,h1)
        let pts = [[0.0, 0.0], [h[0], 0.0], [h[0], h[1]], [0.0, h[1]]];
        let mut u = [0.0; 8];
        for (a, p) in pts.iter().enumerate() {
            u[2 * a] = 2.0 * p[0] + 3.0 * p[1];
            u[2 * a + 1] = -p[0] + 5.0 * p[1];
        }
        for g in GAUSS {
            let e = strain_at(g[0], g[1], h, &u);
            assert!((e[0] - 2.0).abs() < 1e-13 && (e[1] - 5.0).abs() < 1e-13 && (e[2] - 2.0).abs() < 1e-13);
        }
    }
}
