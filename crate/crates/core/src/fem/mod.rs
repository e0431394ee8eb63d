//! Simplex shape functions, degree-of-freedom maps and sparse assembly.

mod dof;
mod linsolve;
pub mod shape;
mod sparse;

pub use dof::DofMap;
pub use linsolve::{solve_linear, LinearSolver, DEFAULT_RTOL};
pub use shape::{shape_simplex, ShapeEval, SimplexGeometry};
pub use sparse::{SparseSystem, SparsityPattern};

#[allow(unused_imports)]
pub(crate) use linsolve::norm;
