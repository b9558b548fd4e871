//! Kinematic operators of the RVE: averaging (`N`), mean strain (`B`),
//! affine lift (`Y`), rigid translations (`I`) and the constraint projection
//! `P` mapping free unknowns to full DOFs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::element;
use super::grid::StructuredGrid;
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::sparse::Projection;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// No boundary restriction.
    Free,
    /// Every boundary DOF is prescribed to zero.
    FullyPrescribedBoundary,
    /// Opposite boundaries tied; the corner node is pinned.
    PeriodicPlusPinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub boundary: BoundaryCondition,
    /// Prescribe every vertical DOF.
    pub horizontal_only: bool,
    /// Nodes forced to share one translation (a rigid region).
    pub rigid_nodes: Option<Vec<bool>>,
}

impl ConstraintSpec {
    pub fn new(boundary: BoundaryCondition) -> Self {
        Self { boundary, horizontal_only: false, rigid_nodes: None }
    }

    pub fn horizontal_only(mut self) -> Self {
        self.horizontal_only = true;
        self
    }

    pub fn with_rigid_region(mut self, mask: Vec<bool>) -> Self {
        self.rigid_nodes = Some(mask);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintOperators {
    /// `N` (2 × ndof): `N u = ⟨u⟩`.
    pub mean: Mat<f64>,
    /// `B` (3 × ndof): `B u = ⟨∇ˢu⟩` in Voigt form.
    pub strain: Mat<f64>,
    /// `Y` (ndof × 3): nodal values of the affine field `∇ˢ`-conjugate to `ε`.
    pub affine: Mat<f64>,
    /// `I` (ndof × 2): rigid translations.
    pub rigid: Mat<f64>,
    pub projection: Projection<f64>,
}

impl ConstraintOperators {
    pub fn mean_of(&self, u: &[f64]) -> [f64; 2] {
        let v = self.mean.mul_vec(u);
        [v[0], v[1]]
    }

    pub fn strain_of(&self, u: &[f64]) -> [f64; 3] {
        let v = self.strain.mul_vec(u);
        [v[0], v[1], v[2]]
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root so column order is stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn check_pairs(grid: &StructuredGrid) -> Result<()> {
    let c = grid.coords();
    let tol = 1e-12 * grid.extent()[0].max(grid.extent()[1]);
    if grid.left().len() != grid.right().len() || grid.top().len() != grid.bottom().len() {
        return Err(Error::MeshIncompatibility("opposite boundaries differ in size".into()));
    }
    for (l, r) in grid.left().iter().zip(grid.right()) {
        if (c[*l][1] - c[*r][1]).abs() > tol {
            return Err(Error::MeshIncompatibility(format!("left node {l} has no partner on the right")));
        }
    }
    for (b, t) in grid.bottom().iter().zip(grid.top()) {
        if (c[*b][0] - c[*t][0]).abs() > tol {
            return Err(Error::MeshIncompatibility(format!("bottom node {b} has no partner on top")));
        }
    }
    Ok(())
}

/// Builds the kinematic operators for the requested constraint set.
pub fn build_constraints(grid: &StructuredGrid, spec: &ConstraintSpec) -> Result<ConstraintOperators> {
    let ndof = grid.num_dofs();
    let nn = grid.num_nodes();
    let mut uf = UnionFind::new(ndof);
    let mut prescribed = vec![false; ndof];
    match spec.boundary {
        BoundaryCondition::Free => {}
        BoundaryCondition::FullyPrescribedBoundary => {
            for n in (0..nn).filter(|&n| grid.is_boundary(n)) {
                prescribed[2 * n] = true;
                prescribed[2 * n + 1] = true;
            }
        }
        BoundaryCondition::PeriodicPlusPinned => {
            check_pairs(grid)?;
            for (l, r) in grid.left().iter().zip(grid.right()) {
                uf.union(2 * l, 2 * r);
                uf.union(2 * l + 1, 2 * r + 1);
            }
            for (b, t) in grid.bottom().iter().zip(grid.top()) {
                uf.union(2 * b, 2 * t);
                uf.union(2 * b + 1, 2 * t + 1);
            }
            let pin = grid.corners()[0];
            prescribed[2 * pin] = true;
            prescribed[2 * pin + 1] = true;
        }
    }
    if let Some(mask) = &spec.rigid_nodes {
        if mask.len() != nn {
            return Err(Error::Constraint(format!("rigid mask has {} entries, grid has {nn} nodes", mask.len())));
        }
        let mut members = (0..nn).filter(|&n| mask[n]);
        if let Some(first) = members.next() {
            for n in members {
                uf.union(2 * first, 2 * n);
                uf.union(2 * first + 1, 2 * n + 1);
            }
        }
    }
    if spec.horizontal_only {
        for n in 0..nn {
            prescribed[2 * n + 1] = true;
        }
    }
    let mut group_fixed = vec![false; ndof];
    for d in 0..ndof {
        if prescribed[d] {
            let r = uf.find(d);
            group_fixed[r] = true;
        }
    }
    let mut column = vec![usize::MAX; ndof];
    let mut ncols = 0;
    let mut entries = Vec::with_capacity(ndof);
    for d in 0..ndof {
        let r = uf.find(d);
        if group_fixed[r] {
            entries.push(None);
            continue;
        }
        if column[r] == usize::MAX {
            column[r] = ncols;
            ncols += 1;
        }
        entries.push(Some((column[r], 1.0)));
    }
    if ncols == 0 {
        return Err(Error::Constraint("every degree of freedom is prescribed".into()));
    }

    let vol = grid.volume();
    let h = grid.element_size();
    let ni = element::shape_integrals(h);
    let bi = element::strain_integral(h);
    let mut mean = Mat::zeros(2, ndof);
    let mut strain = Mat::zeros(3, ndof);
    for e in 0..grid.num_elements() {
        let dofs = grid.element_dofs(e);
        for a in 0..4 {
            mean[(0, dofs[2 * a])] += ni[a] / vol;
            mean[(1, dofs[2 * a + 1])] += ni[a] / vol;
        }
        for i in 0..3 {
            for (p, d) in dofs.iter().enumerate() {
                strain[(i, *d)] += bi[i][p] / vol;
            }
        }
    }
    let y0 = grid.centroid();
    let mut affine = Mat::zeros(ndof, 3);
    let mut rigid = Mat::zeros(ndof, 2);
    for (n, p) in grid.coords().iter().enumerate() {
        let (dx, dy) = (p[0] - y0[0], p[1] - y0[1]);
        affine[(2 * n, 0)] = dx;
        affine[(2 * n, 2)] = 0.5 * dy;
        affine[(2 * n + 1, 1)] = dy;
        affine[(2 * n + 1, 2)] = 0.5 * dx;
        rigid[(2 * n, 0)] = 1.0;
        rigid[(2 * n + 1, 1)] = 1.0;
    }
    Ok(ConstraintOperators { mean, strain, affine, rigid, projection: Projection::new(ncols, entries) })
}

/// Bloch-Floquet projection for a wave travelling along x:
/// `u(x + lx) = e^{iκ lx} u(x)`, periodic along y.
pub fn bloch_projection(grid: &StructuredGrid, kappa: f64) -> Projection<Complex64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let phase = Complex64::from_polar(1.0, kappa * grid.extent()[0]);
    let mut entries = Vec::with_capacity(grid.num_dofs());
    for n in 0..grid.num_nodes() {
        let (i, j) = grid.node_ij(n);
        let (mi, mj) = (i % nx, j % ny);
        let col = 2 * (mj * nx + mi);
        let w = if i == nx { phase } else { Complex64::new(1.0, 0.0) };
        entries.push(Some((col, w)));
        entries.push(Some((col + 1, w)));
    }
    Projection::new(2 * nx * ny, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{assemble, MaterialField};
    use crate::materials::{isotropic_tensors, MaterialPhase};

    #[test]
    fn fully_prescribed_two_by_two() {
        let g = StructuredGrid::new(2, 2, 1.0).unwrap();
        let ops = build_constraints(&g, &ConstraintSpec::new(BoundaryCondition::FullyPrescribedBoundary)).unwrap();
        assert_eq!(ops.projection.nfree(), 2);
    }

    #[test]
    fn horizontal_only_interior_count() {
        let g = StructuredGrid::new(100, 100, 0.01).unwrap();
        let spec = ConstraintSpec::new(BoundaryCondition::FullyPrescribedBoundary).horizontal_only();
        let ops = build_constraints(&g, &spec).unwrap();
        assert_eq!(ops.projection.nfree(), 99 * 99);
    }

    #[test]
    fn periodic_pinned_count_and_identities() {
        let g = StructuredGrid::new(4, 3, 0.5).unwrap();
        let ops = build_constraints(&g, &ConstraintSpec::new(BoundaryCondition::PeriodicPlusPinned)).unwrap();
        // 4·3 independent nodes, one pinned.
        assert_eq!(ops.projection.nfree(), 2 * 12 - 2);
        let by = ops.strain.matmul(&ops.affine);
        let ni = ops.mean.matmul(&ops.rigid);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((by[(i, j)] - e).abs() < 1e-12);
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((ni[(i, j)] - e).abs() < 1e-12);
            }
        }
        // Paired right/left DOFs share a column.
        for (l, r) in g.left().iter().zip(g.right()) {
            assert_eq!(ops.projection.entry(2 * l), ops.projection.entry(2 * r));
        }
    }

    #[test]
    fn rigid_translations_in_both_kernels() {
        let g = StructuredGrid::new(4, 4, 0.01).unwrap();
        let f = MaterialField::from_fn(&g, |p| {
            let mut ph = if p[0] < 0.005 { MaterialPhase::rubber() } else { MaterialPhase::epoxy() };
            ph.mu_visc = 10.0;
            let (c, v) = isotropic_tensors(&ph);
            (ph.rho, c, v)
        });
        let sys = assemble(&g, &f).unwrap();
        let ops = build_constraints(&g, &ConstraintSpec::new(BoundaryCondition::Free)).unwrap();
        for d in 0..2 {
            let col = ops.rigid.column(d);
            let kmax = sys.stiffness.norm_inf();
            assert!(sys.stiffness.mul_vec(&col).iter().all(|v| v.abs() < 1e-12 * kmax));
            let cmax = sys.damping.norm_inf();
            assert!(sys.damping.mul_vec(&col).iter().all(|v| v.abs() < 1e-12 * cmax));
        }
    }

    #[test]
    fn rigid_region_ties_translations() {
        let g = StructuredGrid::new(4, 4, 1.0).unwrap();
        let mask: Vec<bool> = (0..g.num_nodes()).map(|n| g.is_boundary(n)).collect();
        let spec = ConstraintSpec::new(BoundaryCondition::Free).horizontal_only().with_rigid_region(mask);
        let ops = build_constraints(&g, &spec).unwrap();
        // 9 interior x-DOFs plus one shared frame translation.
        assert_eq!(ops.projection.nfree(), 10);
    }

    #[test]
    fn bloch_phase_on_right_edge() {
        let g = StructuredGrid::new(3, 2, 2.0).unwrap();
        let p = bloch_projection(&g, 0.4);
        assert_eq!(p.nfree(), 12);
        let r = g.node(3, 1);
        let (c, w) = p.entry(2 * r).unwrap();
        assert_eq!(c, p.entry(2 * g.node(0, 1)).unwrap().0);
        assert!((w - Complex64::from_polar(1.0, 0.8)).norm() < 1e-15);
        // Top-right corner carries the phase and maps to node 0.
        assert_eq!(p.entry(2 * g.node(3, 2)).unwrap().0, 0);
    }
}
