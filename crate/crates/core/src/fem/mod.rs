//! Structured plane-strain finite elements on rectangular RVE grids.

pub mod assembly;
pub mod constraints;
pub mod element;
pub mod grid;

pub use assembly::{assemble, MaterialField, SystemMatrices};
pub use constraints::{bloch_projection, build_constraints, BoundaryCondition, ConstraintOperators, ConstraintSpec};
pub use element::Voigt;
pub use grid::StructuredGrid;
