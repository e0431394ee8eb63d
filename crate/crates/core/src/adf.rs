//! Approximate distance function from the screened Poisson equation.
//!
//! Each body solves `c_L ∇²φ − φ = 0` on its deformed configuration with
//! `φ = 1` on its boundary. The signed gap is `g = ±γ ln φ` where γ is
//! either `l_c = √c_L` (recovers the exact distance for a half-space) or
//! `c_L` itself.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::shape::shape_values;
use crate::fem::{DofMap, LinearSolver, SimplexGeometry, SparseSystem, SparsityPattern};
use crate::mesh::{BoundaryInfo, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapSign {
    /// Interior points have negative gap.
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl GapSign {
    pub fn factor(self) -> f64 {
        match self {
            GapSign::Plus => 1.0,
            GapSign::Minus => -1.0,
        }
    }
}

/// Scale applied to `ln φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapNormalization {
    /// `γ = c_L`.
    Paper,
    /// `γ = √c_L = l_c`.
    Sqrt,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdfParams {
    pub l_c: f64,
    pub sign: GapSign,
    pub normalization: GapNormalization,
}

impl AdfParams {
    pub fn new(l_c: f64) -> Self {
        AdfParams {
            l_c,
            sign: GapSign::Plus,
            normalization: GapNormalization::Sqrt,
        }
    }

    #[inline]
    pub fn c_l(&self) -> f64 {
        self.l_c * self.l_c
    }

    /// Signed multiplier of `ln φ`.
    #[inline]
    pub fn gap_scale(&self) -> f64 {
        let gamma = match self.normalization {
            GapNormalization::Sqrt => self.l_c,
            GapNormalization::Paper => self.c_l(),
        };
        self.sign.factor() * gamma
    }
}

/// Nodal φ for every body of a mesh (each node carries its own body's value).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub phi: Vec<f64>,
    pub params: AdfParams,
}

/// Gap, its spatial gradient and Hessian at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEval {
    pub phi: f64,
    pub grad_phi: [f64; 3],
    pub g: f64,
    pub grad_g: [f64; 3],
    pub hess_g: Matrix3<f64>,
}

impl GapEval {
    /// Unit normal `∇g / ‖∇g‖` (zero when the gradient vanishes).
    pub fn normal(&self) -> [f64; 3] {
        let n = self.grad_g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return [0.0; 3];
        }
        self.grad_g.map(|v| v / n)
    }
}

/// Local element contributions `c_L ∫ ∇Nᵢ·∇Nⱼ + ∫ NᵢNⱼ` (consistent mass).
pub fn element_matrix(geo: &SimplexGeometry, c_l: f64) -> Vec<f64> {
    let npe = geo.dim + 1;
    let mass_scale = geo.volume / ((npe * (npe + 1)) as f64);
    let mut k = vec![0.0; npe * npe];
    for i in 0..npe {
        for j in 0..npe {
            let gg: f64 = (0..geo.dim).map(|c| geo.grad[i][c] * geo.grad[j][c]).sum();
            let m = if i == j { 2.0 * mass_scale } else { mass_scale };
            k[i * npe + j] = c_l * geo.volume * gg + m;
        }
    }
    k
}

fn element_coords(mesh: &Mesh, coords: &[f64], e: usize, out: &mut [f64]) {
    let d = mesh.dim();
    for (k, &n) in mesh.element(e).iter().enumerate() {
        out[k * d..(k + 1) * d].copy_from_slice(&coords[n * d..(n + 1) * d]);
    }
}

/// Screened Poisson problem of one body with a fixed Dirichlet node set.
/// The sparsity pattern and symbolic factorization persist across solves.
pub struct ScreenedPoisson {
    body: usize,
    elements: Vec<usize>,
    dofs: DofMap,
    pattern: Arc<SparsityPattern>,
    solver: LinearSolver,
}

impl ScreenedPoisson {
    /// `dirichlet` lists the nodes held at `φ = 1`; they must belong to `body`.
    pub fn new(mesh: &Mesh, body: usize, dirichlet: &[usize]) -> Result<Self> {
        let mut fixed = vec![true; mesh.num_nodes()];
        let body_nodes = mesh.body_nodes(body);
        if body_nodes.is_empty() {
            return Err(Error::InvalidMesh(format!("body {body} has no nodes")));
        }
        for &n in &body_nodes {
            fixed[n] = false;
        }
        let mut any = false;
        for &n in dirichlet {
            if mesh.node_body(n) != body {
                return Err(Error::InvalidMesh(format!(
                    "Dirichlet node {n} does not belong to body {body}"
                )));
            }
            fixed[n] = true;
            any = true;
        }
        if !any {
            return Err(Error::InvalidMesh(format!("body {body} has no boundary nodes")));
        }
        let dofs = DofMap::new(mesh.num_nodes(), 1, |n, _| fixed[n]);
        let elements = mesh.body_elements(body);
        let cliques: Vec<Vec<usize>> = elements
            .iter()
            .map(|&e| dofs.clique(mesh.element(e)))
            .collect();
        let pattern = Arc::new(SparsityPattern::from_cliques(dofs.num_free(), &cliques));
        Ok(ScreenedPoisson {
            body,
            elements,
            dofs,
            pattern,
            solver: LinearSolver::new(),
        })
    }

    /// Dirichlet set = the body's exterior nodes.
    pub fn for_body(mesh: &Mesh, boundary: &BoundaryInfo, body: usize) -> Result<Self> {
        let empty = Vec::new();
        let nodes = boundary.exterior_nodes.get(&body).unwrap_or(&empty);
        Self::new(mesh, body, nodes)
    }

    pub fn body(&self) -> usize {
        self.body
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Assembles the reduced system on the configuration `coords`.
    pub fn assemble(&self, mesh: &Mesh, coords: &[f64], c_l: f64) -> Result<SparseSystem> {
        let d = mesh.dim();
        let npe = d + 1;
        let mut sys = SparseSystem::new(self.pattern.clone());
        let mut x = vec![0.0; npe * d];
        let ones = vec![1.0; npe];
        for &e in &self.elements {
            element_coords(mesh, coords, e, &mut x);
            let geo = SimplexGeometry::new(&x, d).map_err(|_| Error::DegenerateElement {
                element: e,
                volume: mesh.signed_volume(e, coords),
            })?;
            let ke = element_matrix(&geo, c_l);
            let dofs = self.dofs.element_dofs(mesh.element(e));
            sys.add_element(&dofs, &ke, &[], Some(&ones))?;
        }
        Ok(sys)
    }

    /// Solves and writes φ for this body's nodes into `phi` (Dirichlet nodes get 1).
    pub fn solve(&mut self, mesh: &Mesh, coords: &[f64], c_l: f64, phi: &mut [f64]) -> Result<()> {
        let sys = self.assemble(mesh, coords, c_l)?;
        let x = self.solver.solve(&sys)?;
        for n in mesh.body_nodes(self.body) {
            phi[n] = match self.dofs.dof(n, 0) {
                Some(k) => x[k],
                None => 1.0,
            };
        }
        Ok(())
    }
}

/// Reduced screened Poisson system of `body` (φ = 1 on its exterior nodes).
pub fn assemble_screened_poisson(
    mesh: &Mesh,
    coords: &[f64],
    boundary: &BoundaryInfo,
    body: usize,
    c_l: f64,
) -> Result<(SparseSystem, DofMap)> {
    let p = ScreenedPoisson::for_body(mesh, boundary, body)?;
    let sys = p.assemble(mesh, coords, c_l)?;
    Ok((sys, p.dofs))
}

/// One screened Poisson solver per body, reused across load steps.
pub struct AdfSolver {
    problems: Vec<ScreenedPoisson>,
}

impl AdfSolver {
    pub fn new(mesh: &Mesh, boundary: &BoundaryInfo) -> Result<Self> {
        let problems = mesh
            .body_ids()
            .into_iter()
            .map(|b| ScreenedPoisson::for_body(mesh, boundary, b))
            .collect::<Result<_>>()?;
        Ok(AdfSolver { problems })
    }

    /// Solves every body whose id passes `which`, updating `field.phi` in place.
    pub fn solve_into(
        &mut self,
        mesh: &Mesh,
        coords: &[f64],
        field: &mut ScalarField,
        which: impl Fn(usize) -> bool,
    ) -> Result<()> {
        let c_l = field.params.c_l();
        for p in self.problems.iter_mut().filter(|p| which(p.body)) {
            p.solve(mesh, coords, c_l, &mut field.phi)?;
        }
        Ok(())
    }

    pub fn solve(&mut self, mesh: &Mesh, coords: &[f64], params: AdfParams) -> Result<ScalarField> {
        let mut field = ScalarField {
            phi: vec![1.0; mesh.num_nodes()],
            params,
        };
        self.solve_into(mesh, coords, &mut field, |_| true)?;
        Ok(field)
    }
}

impl ScalarField {
    /// Gap at every node from its own body's φ.
    pub fn nodal_gap(&self) -> Vec<f64> {
        let s = self.params.gap_scale();
        self.phi
            .iter()
            .map(|&p| if p > 0.0 { s * p.ln() } else { f64::NAN })
            .collect()
    }

    /// Nodes whose φ leaves `(0, 1 + tol]`.
    pub fn out_of_bounds(&self, tol: f64) -> Vec<usize> {
        (0..self.phi.len())
            .filter(|&n| !(self.phi[n] > 0.0 && self.phi[n] <= 1.0 + tol))
            .collect()
    }
}

/// Evaluates `g`, `∇g` and `∇⊗∇g` at parent point `xi` of `element`, using
/// the element geometry in `coords` and the nodal values of `field`.
pub fn eval_gap(
    field: &ScalarField,
    mesh: &Mesh,
    coords: &[f64],
    element: usize,
    xi: &[f64],
) -> Result<GapEval> {
    let d = mesh.dim();
    let nodes = mesh.element(element);
    let mut x = [0.0; 12];
    element_coords(mesh, coords, element, &mut x[..(d + 1) * d]);
    let geo = SimplexGeometry::new(&x[..(d + 1) * d], d)?;
    let n = shape_values(xi);
    let phi_n: Vec<f64> = nodes.iter().map(|&k| field.phi[k]).collect();
    gap_from_parts(&geo, &n, &phi_n, field.params).map_err(|e| match e {
        Error::NonPositivePhi { value, .. } => Error::NonPositivePhi { element, value },
        other => other,
    })
}

pub(crate) fn gap_from_parts(
    geo: &SimplexGeometry,
    n: &[f64; 4],
    phi_n: &[f64],
    params: AdfParams,
) -> Result<GapEval> {
    let d = geo.dim;
    let phi: f64 = (0..=d).map(|k| n[k] * phi_n[k]).sum();
    if !(phi > 0.0) {
        return Err(Error::NonPositivePhi {
            element: usize::MAX,
            value: phi,
        });
    }
    let mut grad_phi = [0.0; 3];
    for c in 0..d {
        grad_phi[c] = (0..=d).map(|k| phi_n[k] * geo.grad[k][c]).sum();
    }
    let s = params.gap_scale();
    let g = s * phi.ln();
    let grad_g = grad_phi.map(|v| s * v / phi);
    // ∇⊗∇φ vanishes inside a linear element.
    let hess_g = Matrix3::from_fn(|a, b| -s / (phi * phi) * grad_phi[a] * grad_phi[b]);
    Ok(GapEval {
        phi,
        grad_phi,
        g,
        grad_g,
        hess_g,
    })
}

/// One row of a Varadhan-limit sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct VaradhanRow {
    pub l_c: f64,
    pub max_error: f64,
    /// `l_c` is below the mesh resolution or the error grew against the
    /// next larger `l_c`.
    pub warning: bool,
}

/// Solves the screened Poisson problem of `body` (φ = 1 on `dirichlet`) for
/// each `l_c` and reports `max |−l_c ln φ − d_exact|` over the nodes accepted
/// by `measure`.
pub fn varadhan_limit_check(
    mesh: &Mesh,
    body: usize,
    dirichlet: &[usize],
    l_cs: &[f64],
    exact: impl Fn(&[f64]) -> f64,
    measure: impl Fn(&[f64]) -> bool,
) -> Result<Vec<VaradhanRow>> {
    let mut problem = ScreenedPoisson::new(mesh, body, dirichlet)?;
    let h = (0..mesh.num_elements())
        .filter(|&e| mesh.element_body(e) == body)
        .map(|e| mesh.max_edge_length(e, mesh.coords()))
        .fold(0.0, f64::max);
    let nodes = mesh.body_nodes(body);
    let mut rows = Vec::with_capacity(l_cs.len());
    for &l_c in l_cs {
        let mut phi = vec![1.0; mesh.num_nodes()];
        problem.solve(mesh, mesh.coords(), l_c * l_c, &mut phi)?;
        let mut max_error: f64 = 0.0;
        for &n in &nodes {
            let x = mesh.node(n);
            if !measure(x) {
                continue;
            }
            let err = if phi[n] > 0.0 {
                (-l_c * phi[n].ln() - exact(x)).abs()
            } else {
                f64::INFINITY
            };
            max_error = max_error.max(err);
        }
        rows.push(VaradhanRow {
            l_c,
            max_error,
            warning: l_c < h || !max_error.is_finite(),
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].l_c.total_cmp(&rows[a].l_c));
    for w in order.windows(2) {
        if rows[w[1]].max_error > rows[w[0]].max_error {
            rows[w[1]].warning = true;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_boundary, generate};

    #[test]
    fn boundary_everywhere_gives_unit_field() {
        let m = Mesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 2], vec![0]).unwrap();
        let b = extract_boundary(&m);
        let f = AdfSolver::new(&m, &b)
            .unwrap()
            .solve(&m, m.coords(), AdfParams::new(0.2))
            .unwrap();
        assert_eq!(f.phi, vec![1.0; 3]);
        assert_eq!(f.nodal_gap(), vec![0.0; 3]);
    }

    #[test]
    fn element_matrix_is_symmetric_with_exact_mass() {
        let geo = SimplexGeometry::new(&[0., 0., 2., 0., 0., 1.], 2).unwrap();
        let k = element_matrix(&geo, 0.0);
        let total: f64 = k.iter().sum();
        assert!((total - geo.volume).abs() < 1e-15);
        let k = element_matrix(&geo, 0.3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k[i * 3 + j], k[j * 3 + i]);
            }
        }
    }

    #[test]
    fn gap_vanishes_where_phi_is_one() {
        let m = Mesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 2], vec![0]).unwrap();
        let field = ScalarField {
            phi: vec![1.0; 3],
            params: AdfParams::new(0.1),
        };
        let g = eval_gap(&field, &m, m.coords(), 0, &[0.3, 0.3]).unwrap();
        assert_eq!(g.g, 0.0);
        let bad = ScalarField {
            phi: vec![-1.0; 3],
            params: AdfParams::new(0.1),
        };
        assert!(matches!(
            eval_gap(&bad, &m, m.coords(), 0, &[0.3, 0.3]),
            Err(Error::NonPositivePhi { element: 0, .. })
        ));
    }

    #[test]
    fn normalizations_and_signs() {
        let mut p = AdfParams::new(0.2);
        assert!((p.gap_scale() - 0.2).abs() < 1e-15);
        p.normalization = GapNormalization::Paper;
        assert!((p.gap_scale() - 0.04).abs() < 1e-15);
        p.sign = GapSign::Minus;
        assert!((p.gap_scale() + 0.04).abs() < 1e-15);
    }

    #[test]
    fn coarse_sweep_flags_small_length() {
        let m = generate::disk([0., 0.], 1.0, 0.1).unwrap();
        let b = extract_boundary(&m);
        let rows = varadhan_limit_check(
            &m,
            0,
            &b.exterior_nodes[&0],
            &[0.4, 0.2, 0.05],
            |x| 1.0 - x[0].hypot(x[1]),
            |_| true,
        )
        .unwrap();
        assert!(!rows[0].warning && !rows[1].warning);
        assert!(rows[2].warning);
    }
}
