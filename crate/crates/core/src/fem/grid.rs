use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Rectangular grid of `nx × ny` equal quadrilaterals spanning `[0, lx] × [0, ly]`.
///
/// Nodes are numbered row by row from the bottom-left corner; node `n` owns
/// DOFs `2n` (x) and `2n + 1` (y). Elements follow the same row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    coords: Vec<[f64; 2]>,
    left: Vec<usize>,
    right: Vec<usize>,
    bottom: Vec<usize>,
    top: Vec<usize>,
}

impl StructuredGrid {
    /// Square cell of edge `cell_size`.
    pub fn new(nx: usize, ny: usize, cell_size: f64) -> Result<Self> {
        Self::rectangular(nx, ny, cell_size, cell_size)
    }

    pub fn rectangular(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "grid needs at least 2 elements per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "grid extent must be positive, got {lx} x {ly}"
            )));
        }
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            coords,
            left: (0..=ny).map(|j| id(0, j)).collect(),
            right: (0..=ny).map(|j| id(nx, j)).collect(),
            bottom: (0..=nx).map(|i| id(i, 0)).collect(),
            top: (0..=nx).map(|i| id(i, ny)).collect(),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.lx, self.ly]
    }

    /// Element edge lengths.
    pub fn element_size(&self) -> [f64; 2] {
        [self.lx / self.nx as f64, self.ly / self.ny as f64]
    }

    /// Cell area per unit depth.
    pub fn volume(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn centroid(&self) -> [f64; 2] {
        [0.5 * self.lx, 0.5 * self.ly]
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn dof(node: usize, dir: usize) -> usize {
        2 * node + dir
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Counter-clockwise corner nodes starting at the bottom-left one.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        [self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1)]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [2 * n[0], 2 * n[0] + 1, 2 * n[1], 2 * n[1] + 1, 2 * n[2], 2 * n[2] + 1, 2 * n[3], 2 * n[3] + 1]
    }

    pub fn left(&self) -> &[usize] {
        &self.left
    }

    pub fn right(&self) -> &[usize] {
        &self.right
    }

    pub fn bottom(&self) -> &[usize] {
        &self.bottom
    }

    pub fn top(&self) -> &[usize] {
        &self.top
    }

    /// Bottom-left, bottom-right, top-right, top-left.
    pub fn corners(&self) -> [usize; 4] {
        [self.node(0, 0), self.node(self.nx, 0), self.node(self.nx, self.ny), self.node(0, self.ny)]
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        let (i, j) = self.node_ij(n);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Physical coordinates of the four Gauss points of element `e`, in the
    /// same order as [`crate::fem::element::GAUSS`].
    pub fn gauss_points(&self, e: usize) -> [[f64; 2]; 4] {
        let (i, j) = self.element_ij(e);
        let [hx, hy] = self.element_size();
        let x0 = hx * (i as f64 + 0.5);
        let y0 = hy * (j as f64 + 0.5);
        let g = super::element::GAUSS;
        core::array::from_fn(|k| [x0 + 0.5 * hx * g[k][0], y0 + 0.5 * hy * g[k][1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_two_by_two() {
        let g = StructuredGrid::new(2, 2, 1.0).unwrap();
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_dofs(), 18);
        assert_eq!(g.centroid(), [0.5, 0.5]);
    }

    #[test]
    fn hundred_square_grid() {
        let g = StructuredGrid::new(100, 100, 0.01).unwrap();
        assert_eq!(g.num_nodes(), 10201);
        assert!((g.element_size()[0] - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn boundary_set_sizes() {
        let g = StructuredGrid::new(3, 2, 1.0).unwrap();
        assert_eq!(g.left().len(), 3);
        assert_eq!(g.right().len(), 3);
        assert_eq!(g.top().len(), 4);
        assert_eq!(g.bottom().len(), 4);
        for (l, r) in g.left().iter().zip(g.right()) {
            assert_eq!(g.coords()[*l][1], g.coords()[*r][1]);
        }
    }

    #[test]
    fn centroid_is_coordinate_average() {
        let g = StructuredGrid::new(5, 4, 0.3).unwrap();
        // Volume average of y over the cell, by Gauss quadrature.
        let mut acc = [0.0; 2];
        for e in 0..g.num_elements() {
            for p in g.gauss_points(e) {
                acc[0] += p[0];
                acc[1] += p[1];
            }
        }
        let n = 4.0 * g.num_elements() as f64;
        let c = g.centroid();
        assert!((acc[0] / n - c[0]).abs() < 1e-14 && (acc[1] / n - c[1]).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(StructuredGrid::new(1, 3, 1.0).is_err());
        assert!(StructuredGrid::new(3, 3, 0.0).is_err());
        assert!(StructuredGrid::new(3, 3, -1.0).is_err());
    }
}
