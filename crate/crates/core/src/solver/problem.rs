use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::{BoundaryInfo, Mesh};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub name: String,
    pub material: MaterialParams,
    /// Fixed in place; still carries a φ field and acts as a target.
    pub rigid: bool,
    /// Receives the viscous regularization force.
    pub damped: bool,
}

/// Prescribed displacement components on a node set, scaled by λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletBc {
    pub name: String,
    pub nodes: Vec<usize>,
    /// `(component, displacement at λ = 1)`.
    pub components: Vec<(usize, f64)>,
}

impl DirichletBc {
    /// True when some component moves with λ.
    pub fn is_driven(&self) -> bool {
        self.components.iter().any(|&(_, v)| v != 0.0)
    }
}

/// Everything the solver needs besides its numerical parameters.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub boundary: BoundaryInfo,
    /// Indexed by body id.
    pub bodies: Vec<BodySpec>,
    pub bcs: Vec<DirichletBc>,
    /// Nodal external force at λ = 1 (node-major, `d` per node).
    pub f_ext: Vec<f64>,
    pub contact: ContactParams,
    pub contact_enabled: bool,
}

impl Problem {
    pub fn new(
        mesh: Mesh,
        bodies: Vec<BodySpec>,
        bcs: Vec<DirichletBc>,
        f_ext: Option<Vec<f64>>,
        contact: ContactParams,
    ) -> Result<Self> {
        let boundary = crate::mesh::extract_boundary(&mesh);
        let n = mesh.num_nodes() * mesh.dim();
        let f_ext = f_ext.unwrap_or_else(|| vec![0.0; n]);
        if f_ext.len() != n {
            return Err(Error::FieldLength {
                name: "f_ext".into(),
                expected: n,
                found: f_ext.len(),
            });
        }
        for b in mesh.body_ids() {
            if b >= bodies.len() {
                return Err(Error::config("body", format!("mesh uses body id {b} without a body entry")));
            }
        }
        for bc in &bcs {
            if bc.nodes.is_empty() {
                return Err(Error::config(
                    format!("bc.{}", bc.name),
                    "selects no nodes",
                ));
            }
            if let Some(&(c, _)) = bc.components.iter().find(|&&(c, _)| c >= mesh.dim()) {
                return Err(Error::config(
                    format!("bc.{}", bc.name),
                    format!("component {c} out of range"),
                ));
            }
        }
        contact.validate()?;
        Ok(Problem {
            mesh,
            boundary,
            bodies,
            bcs,
            f_ext,
            contact,
            contact_enabled: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes() * self.mesh.dim()
    }

    /// Prescribed displacement of every constrained dof at load factor `lambda`
    /// (rigid bodies are held at zero); `None` for free dofs.
    pub fn prescribed(&self, lambda: f64) -> Vec<Option<f64>> {
        let d = self.dim();
        let mut p = vec![None; self.num_dofs()];
        for n in 0..self.mesh.num_nodes() {
            if self.bodies[self.mesh.node_body(n)].rigid {
                for a in 0..d {
                    p[n * d + a] = Some(0.0);
                }
            }
        }
        for bc in &self.bcs {
            for &n in &bc.nodes {
                for &(c, v) in &bc.components {
                    if p[n * d + c].is_none() || !self.bodies[self.mesh.node_body(n)].rigid {
                        p[n * d + c] = Some(lambda * v);
                    }
                }
            }
        }
        p
    }
}

/// Nodal forces of a uniform traction `t` (per unit reference face measure)
/// on the exterior faces whose nodes all satisfy `select` (by node index).
pub fn traction_forces(
    mesh: &Mesh,
    boundary: &BoundaryInfo,
    traction: &[f64],
    select: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let d = mesh.dim();
    let mut f = vec![0.0; mesh.num_nodes() * d];
    for fi in 0..boundary.exterior_faces.len() {
        let nodes = boundary.face_nodes(mesh, fi);
        if !nodes.iter().all(|&n| select(n)) {
            continue;
        }
        let p = |n: usize| {
            let mut v = [0.0; 3];
            v[..d].copy_from_slice(mesh.node(n));
            v
        };
        let measure = if d == 2 {
            let (a, b) = (p(nodes[0]), p(nodes[1]));
            (b[0] - a[0]).hypot(b[1] - a[1])
        } else {
            let (a, b, c) = (p(nodes[0]), p(nodes[1]), p(nodes[2]));
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let x = [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ];
            0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        };
        for &n in &nodes {
            for a in 0..d {
                f[n * d + a] += traction[a] * measure / d as f64;
            }
        }
    }
    f
}

/// Nodes whose reference coordinates lie in the box `[lo, hi]` (inclusive,
/// with an absolute slack `tol`).
pub fn select_box(mesh: &Mesh, lo: &[f64], hi: &[f64], tol: f64) -> Vec<usize> {
    let d = mesh.dim();
    (0..mesh.num_nodes())
        .filter(|&n| {
            let x = mesh.node(n);
            (0..d).all(|a| x[a] >= lo[a] - tol && x[a] <= hi[a] + tol)
        })
        .collect()
}
