//! Linear simplex shape functions with the ordering `N1 = 1 - Σξ`,
//! `N(k+1) = ξk`. Two-dimensional quantities are padded into 3-vectors and
//! 3x3 matrices (zero third component, unit `j33`).

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Shape functions at a parent point plus the deformed-configuration
/// Jacobian of the element they were evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeEval {
    pub dim: usize,
    /// `d + 1` values.
    pub n: [f64; 4],
    /// Parent gradients, one row per node (`d` meaningful columns).
    pub dn_dxi: [[f64; 3]; 4],
    /// `j[a][b] = Σ_K x_Ka dN_K/dξ_b`, identity in the padded slots.
    pub j: Matrix3<f64>,
    pub det_j: f64,
}

/// Shape values at `xi` (length `d`).
pub fn shape_values(xi: &[f64]) -> [f64; 4] {
    let mut n = [0.0; 4];
    n[0] = 1.0 - xi.iter().sum::<f64>();
    for (k, &x) in xi.iter().enumerate() {
        n[k + 1] = x;
    }
    n
}

/// Constant parent gradients `dN_K/dξ`.
pub fn parent_gradients(dim: usize) -> [[f64; 3]; 4] {
    let mut g = [[0.0; 3]; 4];
    for b in 0..dim {
        g[0][b] = -1.0;
        g[b + 1][b] = 1.0;
    }
    g
}

/// Parent part of [`ShapeEval`]; `j` is the identity until an element is attached.
pub fn shape_simplex(xi: &[f64], dim: usize) -> ShapeEval {
    debug_assert_eq!(xi.len(), dim);
    ShapeEval {
        dim,
        n: shape_values(xi),
        dn_dxi: parent_gradients(dim),
        j: Matrix3::identity(),
        det_j: 1.0,
    }
}

impl ShapeEval {
    /// Attaches element node coordinates (flat, `d` per node).
    pub fn with_nodes(mut self, x: &[f64]) -> Self {
        self.j = jacobian(x, self.dim);
        self.det_j = self.j.determinant();
        self
    }
}

/// `j = Σ_K x_K ⊗ dN_K/dξ` for flat node coordinates.
pub fn jacobian(x: &[f64], dim: usize) -> Matrix3<f64> {
    let mut j = Matrix3::identity();
    for a in 0..dim {
        for b in 0..dim {
            j[(a, b)] = x[(b + 1) * dim + a] - x[a];
        }
    }
    j
}

/// Spatial quantities of a linear simplex that are constant over the element.
#[derive(Clone, Debug)]
pub struct SimplexGeometry {
    pub dim: usize,
    pub j: Matrix3<f64>,
    pub j_inv: Matrix3<f64>,
    pub det_j: f64,
    /// `dN_K/dx`, one row per node.
    pub grad: [[f64; 3]; 4],
    /// `det j / d!`.
    pub volume: f64,
}

impl SimplexGeometry {
    /// Fails with [`Error::DegenerateSimplex`] when `det j` is not positive.
    pub fn new(x: &[f64], dim: usize) -> Result<Self> {
        let j = jacobian(x, dim);
        let det_j = j.determinant();
        if !(det_j > 0.0) {
            return Err(Error::DegenerateSimplex { det: det_j });
        }
        let j_inv = j.try_inverse().ok_or(Error::DegenerateSimplex { det: det_j })?;
        let g = parent_gradients(dim);
        let mut grad = [[0.0; 3]; 4];
        for k in 0..=dim {
            for c in 0..dim {
                grad[k][c] = (0..dim).map(|b| g[k][b] * j_inv[(b, c)]).sum();
            }
        }
        let volume = if dim == 2 { det_j / 2.0 } else { det_j / 6.0 };
        Ok(SimplexGeometry {
            dim,
            j,
            j_inv,
            det_j,
            grad,
            volume,
        })
    }
}
