//! Compressible Neo-Hookean solid and the total-Lagrangian linear simplex.
//!
//! `ψ(C) = μ/2 (tr C − 3) − μ ln J + χ/2 (ln J)²` with `J = √det C`,
//! `S = 2 ∂ψ/∂C = μ (I − C⁻¹) + χ ln J C⁻¹`. Two-dimensional problems are
//! plane strain: `C` is embedded as 3x3 with `C33 = 1`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SimplexGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub young: f64,
    pub poisson: f64,
}

impl MaterialParams {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0) {
            return Err(Error::config("E", format!("must be positive, got {young}")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::config("nu", format!("must lie in (-1, 0.5), got {poisson}")));
        }
        Ok(MaterialParams { young, poisson })
    }

    /// Shear modulus `E / (2(1 + ν))`.
    pub fn mu(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// Lamé's first parameter `Eν / ((1 + ν)(1 − 2ν))`.
    pub fn chi(&self) -> f64 {
        self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
    }
}

/// Fourth-order tensor `dS/dC`, indexed `[I][J][K][L]`.
pub type Tangent = [[[[f64; 3]; 3]; 3]; 3];

fn checked_inverse(c: &Matrix3<f64>) -> Result<(Matrix3<f64>, f64)> {
    let det = c.determinant();
    if !(det > 0.0) || !c.cholesky().is_some() {
        return Err(Error::NonSpdStrain);
    }
    let inv = c.try_inverse().ok_or(Error::NonSpdStrain)?;
    Ok((inv, 0.5 * det.ln()))
}

pub fn strain_energy(c: &Matrix3<f64>, p: &MaterialParams) -> Result<f64> {
    let (_, ln_j) = checked_inverse(c)?;
    let (mu, chi) = (p.mu(), p.chi());
    Ok(0.5 * mu * (c.trace() - 3.0) - mu * ln_j + 0.5 * chi * ln_j * ln_j)
}

pub fn stress(c: &Matrix3<f64>, p: &MaterialParams) -> Result<Matrix3<f64>> {
    let (ci, ln_j) = checked_inverse(c)?;
    let (mu, chi) = (p.mu(), p.chi());
    Ok((Matrix3::identity() - ci) * mu + ci * (chi * ln_j))
}

/// Second Piola-Kirchhoff stress and its derivative with respect to `C`
/// (minor and major symmetric).
pub fn stress_and_tangent(c: &Matrix3<f64>, p: &MaterialParams) -> Result<(Matrix3<f64>, Tangent)> {
    let (ci, ln_j) = checked_inverse(c)?;
    let (mu, chi) = (p.mu(), p.chi());
    let s = (Matrix3::identity() - ci) * mu + ci * (chi * ln_j);
    let a = mu - chi * ln_j;
    let mut t: Tangent = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t[i][j][k][l] = 0.5 * a * (ci[(i, k)] * ci[(j, l)] + ci[(i, l)] * ci[(j, k)])
                        + 0.5 * chi * ci[(i, j)] * ci[(k, l)];
                }
            }
        }
    }
    Ok((s, t))
}

/// Residual (internal force) and stiffness of one element, both ordered
/// node-major (`K * d + a`).
#[derive(Clone, Debug)]
pub struct ElementResponse {
    pub energy: f64,
    pub residual: Vec<f64>,
    /// Row-major square matrix.
    pub stiffness: Vec<f64>,
}

/// Deformation gradient `F = I + Σ u_K ⊗ ∇₀N_K` (padded to 3x3).
pub fn deformation_gradient(geo: &SimplexGeometry, u: &[f64]) -> Matrix3<f64> {
    let d = geo.dim;
    let mut f = Matrix3::identity();
    for k in 0..=d {
        for a in 0..d {
            for b in 0..d {
                f[(a, b)] += u[k * d + a] * geo.grad[k][b];
            }
        }
    }
    f
}

/// Total strain energy `V₀ ψ(C)` of one element.
pub fn element_energy(geo: &SimplexGeometry, u: &[f64], p: &MaterialParams) -> Result<f64> {
    let f = deformation_gradient(geo, u);
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::InvertedElement { element: usize::MAX, det });
    }
    Ok(geo.volume * strain_energy(&(f.transpose() * f), p)?)
}

/// `geo` is the reference geometry; `u` holds the element's nodal displacements.
/// An inverted element reports [`Error::InvertedElement`] with a placeholder
/// index that callers replace.
pub fn element_residual_stiffness(
    geo: &SimplexGeometry,
    u: &[f64],
    p: &MaterialParams,
) -> Result<ElementResponse> {
    let d = geo.dim;
    let npe = d + 1;
    let m = npe * d;
    let f = deformation_gradient(geo, u);
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::InvertedElement { element: usize::MAX, det });
    }
    let c = f.transpose() * f;
    let energy = geo.volume * strain_energy(&c, p)?;
    let (s, t) = stress_and_tangent(&c, p)?;
    let pk1 = f * s;
    let v0 = geo.volume;
    let g = &geo.grad;

    let mut residual = vec![0.0; m];
    for k in 0..npe {
        for a in 0..d {
            residual[k * d + a] = v0 * (0..d).map(|j| pk1[(a, j)] * g[k][j]).sum::<f64>();
        }
    }

    // Symmetrised strain variations B(K,a)_IJ = sym(F_aI ∇N_K,J).
    let mut b = vec![[[0.0; 3]; 3]; m];
    for k in 0..npe {
        for a in 0..d {
            let bk = &mut b[k * d + a];
            for i in 0..3 {
                for j in 0..3 {
                    let gj = if j < d { g[k][j] } else { 0.0 };
                    let gi = if i < d { g[k][i] } else { 0.0 };
                    bk[i][j] = 0.5 * (f[(a, i)] * gj + f[(a, j)] * gi);
                }
            }
        }
    }
    // D:B for every column.
    let mut db = vec![[[0.0; 3]; 3]; m];
    for (col, bm) in b.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        acc += t[i][j][k][l] * bm[k][l];
                    }
                }
                db[col][i][j] = acc;
            }
        }
    }
    let mut stiffness = vec![0.0; m * m];
    for r in 0..m {
        for col in r..m {
            let mut mat = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    mat += b[r][i][j] * db[col][i][j];
                }
            }
            // dC = 2 B du, and only the symmetric part of F_aI ∇N_K,J meets dS.
            let mut kij = 2.0 * mat;
            let (kn, a) = (r / d, r % d);
            let (ln, bb) = (col / d, col % d);
            if a == bb {
                let mut geo_term = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        geo_term += g[kn][i] * s[(i, j)] * g[ln][j];
                    }
                }
                kij += geo_term;
            }
            stiffness[r * m + col] = v0 * kij;
            stiffness[col * m + r] = v0 * kij;
        }
    }
    Ok(ElementResponse {
        energy,
        residual,
        stiffness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaterialParams {
        MaterialParams::new(1e5, 0.3).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-0.25..0.25));
        f.transpose() * f
    }

    #[test]
    fn undeformed_state_is_energy_and_stress_free() {
        let c = Matrix3::identity();
        assert_eq!(strain_energy(&c, &params()).unwrap(), 0.0);
        assert!(stress(&c, &params()).unwrap().norm() < 1e-12);
    }

    #[test]
    fn uniaxial_stretch_matches_direct_formula() {
        // Independent evaluation: λ = 1.1, C = diag(λ², 1, 1), ln J = ln λ.
        let lam: f64 = 1.1;
        let (e, nu) = (1e5, 0.3);
        let mu = e / (2.0 * (1.0 + nu));
        let chi = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let expected =
            0.5 * mu * (lam * lam - 1.0) - mu * lam.ln() + 0.5 * chi * lam.ln().powi(2);
        let c = Matrix3::from_diagonal(&nalgebra::Vector3::new(lam * lam, 1.0, 1.0));
        let psi = strain_energy(&c, &params()).unwrap();
        assert!((psi - expected).abs() <= 1e-12 * expected.abs());
        // 30-digit mpmath evaluation of the same expression.
        assert!((psi - 634.724_729_862_488_1).abs() < 1e-9, "{psi}");
    }

    #[test]
    fn energy_increases_along_ray_from_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = random_spd(&mut rng);
        let mut last = 0.0;
        for i in 1..=20 {
            let t = i as f64 / 200.0;
            let c = Matrix3::identity() * (1.0 - t) + target * t;
            let psi = strain_energy(&c, &params()).unwrap();
            assert!(psi > last);
            last = psi;
        }
    }

    #[test]
    fn non_spd_strain_is_rejected() {
        let c = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 1.0));
        assert!(matches!(strain_energy(&c, &params()), Err(Error::NonSpdStrain)));
        assert!(MaterialParams::new(-1.0, 0.3).is_err());
        assert!(MaterialParams::new(1.0, 0.5).is_err());
    }

    #[test]
    fn tangent_has_major_and_minor_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (s, t) = stress_and_tangent(&random_spd(&mut rng), &params()).unwrap();
        assert!((s - s.transpose()).norm() < 1e-12 * s.norm());
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = t[i][j][k][l];
                        assert!((v - t[k][l][i][j]).abs() < 1e-9);
                        assert!((v - t[j][i][k][l]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    fn random_sym(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        (a + a.transpose()) * 0.5
    }

    #[test]
    fn stress_and_tangent_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params();
        let h = 1e-6;
        for _ in 0..50 {
            let c = random_spd(&mut rng);
            let d = random_sym(&mut rng);
            let (s, t) = stress_and_tangent(&c, &p).unwrap();
            // dψ = ½ S:dC
            let fd = (strain_energy(&(c + d * h), &p).unwrap()
                - strain_energy(&(c - d * h), &p).unwrap())
                / (2.0 * h);
            let an = 0.5 * s.component_mul(&d).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} {an}");
            let ds = (stress(&(c + d * h), &p).unwrap() - stress(&(c - d * h), &p).unwrap())
                / (2.0 * h);
            let tdc = Matrix3::from_fn(|i, j| {
                let mut acc = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        acc += t[i][j][k][l] * d[(k, l)];
                    }
                }
                acc
            });
            assert!((ds - tdc).norm() <= 1e-5 * tdc.norm().max(1.0));
        }
    }

    fn random_element(rng: &mut ChaCha8Rng, dim: usize) -> SimplexGeometry {
        loop {
            let x: Vec<f64> = (0..(dim + 1) * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            if let Ok(g) = SimplexGeometry::new(&x, dim) {
                if g.volume > 0.02 {
                    return g;
                }
            }
        }
    }

    #[test]
    fn element_stiffness_is_jacobian_of_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = params();
        for dim in [2, 3] {
            for _ in 0..20 {
                let geo = random_element(&mut rng, dim);
                let m = (dim + 1) * dim;
                let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.02..0.02)).collect();
                let r = element_residual_stiffness(&geo, &u, &p).unwrap();
                let kmax = r.stiffness.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let h = 1e-7;
                for j in 0..m {
                    let (mut up, mut um) = (u.clone(), u.clone());
                    up[j] += h;
                    um[j] -= h;
                    let rp = element_residual_stiffness(&geo, &up, &p).unwrap().residual;
                    let rm = element_residual_stiffness(&geo, &um, &p).unwrap().residual;
                    for i in 0..m {
                        let fd = (rp[i] - rm[i]) / (2.0 * h);
                        assert!((fd - r.stiffness[i * m + j]).abs() <= 1e-5 * kmax);
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        let a = r.stiffness[i * m + j] - r.stiffness[j * m + i];
                        assert!(a.abs() <= 1e-12 * kmax);
                    }
                }
                // Residual is the gradient of the element energy.
                let du: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let e = |s: f64| {
                    let v: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + s * b).collect();
                    element_energy(&geo, &v, &p).unwrap()
                };
                let fd = (e(h) - e(-h)) / (2.0 * h);
                let an: f64 = r.residual.iter().zip(&du).map(|(a, b)| a * b).sum();
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3 * kmax));
            }
        }
    }

    #[test]
    fn zero_displacement_and_rigid_rotation_are_stress_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = params();
        for dim in [2, 3] {
            let geo = random_element(&mut rng, dim);
            let m = (dim + 1) * dim;
            let r0 = element_residual_stiffness(&geo, &vec![0.0; m], &p).unwrap();
            assert!(r0.residual.iter().all(|v| v.abs() < 1e-10));
            let rot = nalgebra::Rotation3::from_euler_angles(
                if dim == 3 { 0.4 } else { 0.0 },
                if dim == 3 { -0.7 } else { 0.0 },
                1.1,
            );
            // Node positions relative to node 0 follow from the parent map.
            let mut x = vec![[0.0; 3]; dim + 1];
            for k in 1..=dim {
                for a in 0..dim {
                    x[k][a] = geo.j[(a, k - 1)];
                }
            }
            let mut u = vec![0.0; m];
            for k in 0..=dim {
                let v = nalgebra::Vector3::from(x[k]);
                let y = rot * v;
                for a in 0..dim {
                    u[k * dim + a] = y[a] - v[a] + 0.3;
                }
            }
            let r = element_residual_stiffness(&geo, &u, &p).unwrap();
            assert!(r.residual.iter().all(|v| v.abs() < 1e-10), "{:?}", r.residual);
            assert!(r.energy.abs() < 1e-10);
        }
    }
}
