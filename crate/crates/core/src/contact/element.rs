//! Node-in-element penalty contact with the Courant–Beltrami potential
//! `P = −(κ/3) min(0, g)³` evaluated with frozen target φ values.

use serde::{Deserialize, Serialize};

use super::projection::{projection_derivatives, ProjectionDerivatives};
use crate::adf::{AdfParams, GapNormalization, GapSign};
use crate::error::{Error, Result};
use crate::fem::shape::{parent_gradients, shape_values};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyWeighting {
    None,
    /// κ scaled by the incident node's tributary boundary measure.
    EdgeProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub kappa: f64,
    pub l_c: f64,
    pub sign: GapSign,
    pub gap_normalization: GapNormalization,
    pub penalty_weighting: PenaltyWeighting,
}

impl ContactParams {
    pub fn new(kappa: f64, l_c: f64) -> Self {
        ContactParams {
            kappa,
            l_c,
            sign: GapSign::Plus,
            gap_normalization: GapNormalization::Sqrt,
            penalty_weighting: PenaltyWeighting::None,
        }
    }

    pub fn adf(&self) -> AdfParams {
        AdfParams {
            l_c: self.l_c,
            sign: self.sign,
            normalization: self.gap_normalization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::config("kappa", format!("must be positive, got {}", self.kappa)));
        }
        if !(self.l_c > 0.0) {
            return Err(Error::config("l_c", format!("must be positive, got {}", self.l_c)));
        }
        Ok(())
    }
}

/// An incident exterior node bound to a target element of another body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetAssignment {
    pub node: usize,
    pub element: usize,
    /// Parent coordinates at detection time.
    pub xi: [f64; 3],
    /// Gap at detection time.
    pub g: f64,
    /// Penalty multiplier (1 without weighting), frozen with the assignment.
    pub weight: f64,
}

impl TargetAssignment {
    /// Stacked coordinates `[x_N | x_I]` from the flat array `coords`.
    pub fn x_c(&self, mesh: &Mesh, coords: &[f64]) -> Vec<f64> {
        let d = mesh.dim();
        let mut x = Vec::with_capacity(d * (d + 2));
        for &n in mesh.element(self.element) {
            x.extend_from_slice(&coords[n * d..(n + 1) * d]);
        }
        x.extend_from_slice(&coords[self.node * d..(self.node + 1) * d]);
        x
    }

    /// Global nodes of `x_C` in order.
    pub fn nodes(&self, mesh: &Mesh) -> Vec<usize> {
        let mut v = mesh.element(self.element).to_vec();
        v.push(self.node);
        v
    }
}

/// Residual `∂P/∂x_C` and stiffness `∂²P/∂x_C²` of one contact element.
#[derive(Clone, Debug)]
pub struct ContactResponse {
    pub g: f64,
    pub energy: f64,
    pub residual: Vec<f64>,
    /// Row-major `m x m`.
    pub stiffness: Vec<f64>,
}

impl ContactResponse {
    /// Force on the incident node, `−∂P/∂x_I = κ min(0,g)² ∇g`.
    pub fn incident_force(&self, dim: usize) -> [f64; 3] {
        let m = self.residual.len();
        let mut f = [0.0; 3];
        for a in 0..dim {
            f[a] = -self.residual[m - dim + a];
        }
        f
    }
}

struct GapDerivatives {
    g: f64,
    dg: Vec<f64>,
    d2g: Vec<f64>,
}

fn gap_derivatives(
    pd: &ProjectionDerivatives,
    phi_n: &[f64],
    adf: AdfParams,
    second: bool,
) -> Result<GapDerivatives> {
    let dim = pd.dim;
    let m = pd.num_coords();
    let n = shape_values(&pd.xi[..dim]);
    let phi: f64 = (0..=dim).map(|k| n[k] * phi_n[k]).sum();
    if !(phi > 0.0) {
        return Err(Error::NonPositivePhi {
            element: usize::MAX,
            value: phi,
        });
    }
    let pg = parent_gradients(dim);
    // Parent gradient of φ, constant over the element.
    let mut gphi = [0.0; 3];
    for (i, gi) in gphi.iter_mut().enumerate().take(dim) {
        *gi = (0..=dim).map(|k| pg[k][i] * phi_n[k]).sum();
    }
    let s = adf.gap_scale();
    let g = s * phi.ln();
    let dphi: Vec<f64> = (0..m)
        .map(|p| (0..dim).map(|i| gphi[i] * pd.a(i, p)).sum())
        .collect();
    let dg: Vec<f64> = dphi.iter().map(|v| s * v / phi).collect();
    let mut d2g = Vec::new();
    if second {
        d2g = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..m {
                let d2phi: f64 = (0..dim).map(|i| gphi[i] * pd.aa(i, p, q)).sum();
                d2g[p * m + q] = s * (d2phi / phi - dphi[p] * dphi[q] / (phi * phi));
            }
        }
    }
    Ok(GapDerivatives { g, dg, d2g })
}

/// Gap of the incident point of `x_C` against the target with nodal φ `phi_n`.
pub fn contact_gap(x_c: &[f64], phi_n: &[f64], adf: AdfParams, dim: usize) -> Result<f64> {
    let pd = projection_derivatives(x_c, dim)?;
    Ok(gap_derivatives(&pd, phi_n, adf, false)?.g)
}

/// `P = −(κ/3) min(0, g)³ ≥ 0`.
pub fn contact_potential(
    x_c: &[f64],
    phi_n: &[f64],
    adf: AdfParams,
    kappa: f64,
    dim: usize,
) -> Result<f64> {
    let g = contact_gap(x_c, phi_n, adf, dim)?;
    let gm = g.min(0.0);
    Ok(-kappa / 3.0 * gm * gm * gm)
}

/// Residual and consistent stiffness; `kappa` already includes any weighting.
/// Both vanish identically for `g ≥ 0`.
pub fn contact_element(
    x_c: &[f64],
    phi_n: &[f64],
    adf: AdfParams,
    kappa: f64,
    dim: usize,
) -> Result<ContactResponse> {
    let m = dim * (dim + 2);
    let pd = projection_derivatives(x_c, dim)?;
    let gd = gap_derivatives(&pd, phi_n, adf, false)?;
    if gd.g >= 0.0 {
        return Ok(ContactResponse {
            g: gd.g,
            energy: 0.0,
            residual: vec![0.0; m],
            stiffness: vec![0.0; m * m],
        });
    }
    let gd = gap_derivatives(&pd, phi_n, adf, true)?;
    let g = gd.g;
    let residual: Vec<f64> = gd.dg.iter().map(|v| -kappa * g * g * v).collect();
    let mut stiffness = vec![0.0; m * m];
    for p in 0..m {
        for q in 0..m {
            stiffness[p * m + q] =
                -kappa * (2.0 * g * gd.dg[p] * gd.dg[q] + g * g * gd.d2g[p * m + q]);
        }
    }
    Ok(ContactResponse {
        g,
        energy: -kappa / 3.0 * g * g * g,
        residual,
        stiffness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_when_outside() {
        let x = [0., 0., 1., 0., 0., 1., 0.2, 0.2];
        let r = contact_element(&x, &[1.0; 3], AdfParams::new(0.1), 100.0, 2).unwrap();
        assert_eq!(r.g, 0.0);
        assert!(r.residual.iter().chain(&r.stiffness).all(|&v| v == 0.0));
    }

    #[test]
    fn direct_force_arithmetic() {
        // Linear φ with φ = e^{-0.1} and ∂φ/∂y = φ at the incident point, so
        // with l_c = 1 the gap is −0.1 and ∇g = (0, 1).
        let x = [0., -1., 1., -1., 0., 0.];
        let p = [0.25, -0.5];
        let phi_p = (-0.1f64).exp();
        let phi = |y: f64| phi_p * (1.0 + (y - p[1]));
        let phi_n = [phi(-1.0), phi(-1.0), phi(0.0)];
        let mut xc = x.to_vec();
        xc.extend_from_slice(&p);
        let r = contact_element(&xc, &phi_n, AdfParams::new(1.0), 100.0, 2).unwrap();
        assert!((r.g + 0.1).abs() < 1e-14);
        let f = r.incident_force(2);
        assert!(f[0].abs() < 1e-14);
        assert!((f[1] - 1.0).abs() < 1e-12);
        for a in 0..2 {
            let sum: f64 = (0..4).map(|k| r.residual[k * 2 + a]).sum();
            assert!(sum.abs() < 1e-12);
        }
    }
}
