//! Closed-form parent coordinates of a point in a linear simplex and their
//! first and second derivatives with respect to the stacked coordinates
//! `x_C = [x_1 .. x_{d+1} | x_I]`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::fem::shape::{jacobian, parent_gradients, shape_values};

/// Parent coordinates `ξ` with `x(ξ) = x_I` (first `d` entries meaningful).
///
/// Triangles use the explicit two-by-two inverse; tetrahedra the adjugate.
pub fn project_to_simplex(x_n: &[f64], x_i: &[f64], dim: usize) -> Result<[f64; 3]> {
    let x1 = &x_n[..dim];
    if dim == 2 {
        let (x21, y21) = (x_n[2] - x1[0], x_n[3] - x1[1]);
        let (x31, y31) = (x_n[4] - x1[0], x_n[5] - x1[1]);
        let det = x21 * y31 - x31 * y21;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateSimplex { det });
        }
        let (dx, dy) = (x_i[0] - x1[0], x_i[1] - x1[1]);
        return Ok([(y31 * dx - x31 * dy) / det, (x21 * dy - y21 * dx) / det, 0.0]);
    }
    let j = jacobian(x_n, 3);
    let det = j.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateSimplex { det });
    }
    let inv = j.try_inverse().ok_or(Error::DegenerateSimplex { det })?;
    let r = nalgebra::Vector3::new(x_i[0] - x1[0], x_i[1] - x1[1], x_i[2] - x1[2]);
    let xi = inv * r;
    Ok([xi[0], xi[1], xi[2]])
}

/// `x(ξ) = Σ N_K(ξ) x_K`.
pub fn interpolate(x_n: &[f64], xi: &[f64], dim: usize) -> [f64; 3] {
    let n = shape_values(&xi[..dim]);
    let mut x = [0.0; 3];
    for k in 0..=dim {
        for a in 0..dim {
            x[a] += n[k] * x_n[k * dim + a];
        }
    }
    x
}

/// `a = ξ(x_C)`, `A = ∂ξ/∂x_C` and `𝒜 = ∂²ξ/∂x_C²`.
#[derive(Clone, Debug)]
pub struct ProjectionDerivatives {
    pub dim: usize,
    pub xi: [f64; 3],
    /// `d x m`, row-major, `m = d(d+2)`.
    pub first: Vec<f64>,
    /// `d x m x m`; entry `[i][p][q]` at `(i*m + p)*m + q`.
    pub second: Vec<f64>,
    /// Inverse Jacobian of the target (padded).
    pub j_inv: Matrix3<f64>,
}

impl ProjectionDerivatives {
    #[inline]
    pub fn num_coords(&self) -> usize {
        self.dim * (self.dim + 2)
    }

    #[inline]
    pub fn a(&self, i: usize, p: usize) -> f64 {
        self.first[i * self.num_coords() + p]
    }

    #[inline]
    pub fn aa(&self, i: usize, p: usize, q: usize) -> f64 {
        let m = self.num_coords();
        self.second[(i * m + p) * m + q]
    }
}

/// Derivatives of the closed-form projection. With `w_K = −N_K(ξ)` for the
/// target nodes and `w_I = 1`, `∂ξ/∂x_{P,a} = w_P J⁻¹[:, a]`; differentiating
/// again through `w` and `J⁻¹` gives
/// `∂²ξ/∂x_{P,a}∂x_{Q,b} = −w_Q b_P[b] J⁻¹[:, a] − w_P b_Q[a] J⁻¹[:, b]`
/// where `b_K = ∂N_K/∂x` (zero for the incident node).
pub fn projection_derivatives(x_c: &[f64], dim: usize) -> Result<ProjectionDerivatives> {
    let npe = dim + 1;
    let nn = dim + 2;
    let m = dim * nn;
    debug_assert_eq!(x_c.len(), m);
    let (x_n, x_i) = x_c.split_at(npe * dim);
    let xi = project_to_simplex(x_n, x_i, dim)?;
    let j = jacobian(x_n, dim);
    let det = j.determinant();
    let ji = j.try_inverse().ok_or(Error::DegenerateSimplex { det })?;
    let n = shape_values(&xi[..dim]);
    let pg = parent_gradients(dim);

    let mut w = [0.0; 5];
    let mut b = [[0.0; 3]; 5];
    for k in 0..npe {
        w[k] = -n[k];
        for c in 0..dim {
            b[k][c] = (0..dim).map(|r| pg[k][r] * ji[(r, c)]).sum();
        }
    }
    w[npe] = 1.0;

    let mut first = vec![0.0; dim * m];
    for i in 0..dim {
        for p in 0..nn {
            for a in 0..dim {
                first[i * m + p * dim + a] = w[p] * ji[(i, a)];
            }
        }
    }
    let mut second = vec![0.0; dim * m * m];
    for i in 0..dim {
        for p in 0..nn {
            for a in 0..dim {
                let col = p * dim + a;
                for q in 0..nn {
                    for bb in 0..dim {
                        let row = q * dim + bb;
                        second[(i * m + col) * m + row] =
                            -w[q] * b[p][bb] * ji[(i, a)] - w[p] * b[q][a] * ji[(i, bb)];
                    }
                }
            }
        }
    }
    Ok(ProjectionDerivatives {
        dim,
        xi,
        first,
        second,
        j_inv: ji,
    })
}
