//! Simplicial meshes (3-node triangles, 4-node tetrahedra) carrying several
//! bodies, their exterior topology and the deformed configuration.

mod boundary;
pub mod generate;
mod io;
mod vtk;

use std::collections::BTreeSet;

pub use boundary::{extract_boundary, BoundaryInfo};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use vtk::{read_snapshot, write_snapshot, Snapshot};

use crate::error::{Error, Result};

/// A mesh of `d`-simplices. Every element belongs to one body and every node
/// belongs to exactly one body; bodies never share nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    conn: Vec<usize>,
    element_body: Vec<usize>,
    node_body: Vec<usize>,
}

impl Mesh {
    /// Builds and validates a mesh from flat coordinate and connectivity arrays.
    pub fn new(
        dim: usize,
        coords: Vec<f64>,
        conn: Vec<usize>,
        element_body: Vec<usize>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension {dim} not in {{2, 3}}")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidMesh("coordinate array length not a multiple of d".into()));
        }
        let npe = dim + 1;
        if !conn.len().is_multiple_of(npe) || conn.len() / npe != element_body.len() {
            return Err(Error::InvalidMesh("connectivity does not match body list".into()));
        }
        let num_nodes = coords.len() / dim;
        let mut node_body = vec![usize::MAX; num_nodes];
        for (e, (nodes, &body)) in conn.chunks(npe).zip(&element_body).enumerate() {
            for (k, &n) in nodes.iter().enumerate() {
                if n >= num_nodes {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} references node {n} but only {num_nodes} nodes exist"
                    )));
                }
                if nodes[..k].contains(&n) {
                    return Err(Error::InvalidMesh(format!("element {e} repeats node {n}")));
                }
                match node_body[n] {
                    usize::MAX => node_body[n] = body,
                    b if b != body => {
                        return Err(Error::InvalidMesh(format!(
                            "node {n} is shared by bodies {b} and {body} (element {e})"
                        )))
                    }
                    _ => {}
                }
            }
        }
        if let Some(n) = node_body.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidMesh(format!("node {n} is not used by any element")));
        }
        let mesh = Mesh {
            dim,
            coords,
            conn,
            element_body,
            node_body,
        };
        for e in 0..mesh.num_elements() {
            let v = mesh.signed_volume(e, &mesh.coords);
            if !(v > 0.0) {
                return Err(Error::DegenerateElement {
                    element: e,
                    volume: v,
                });
            }
        }
        Ok(mesh)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.node_body.len()
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.element_body.len()
    }

    /// Reference coordinates, flat with stride `d`.
    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn node(&self, n: usize) -> &[f64] {
        &self.coords[n * self.dim..(n + 1) * self.dim]
    }

    #[inline]
    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.dim + 1;
        &self.conn[e * npe..(e + 1) * npe]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.conn.chunks(self.dim + 1)
    }

    #[inline]
    pub fn element_body(&self, e: usize) -> usize {
        self.element_body[e]
    }

    #[inline]
    pub fn node_body(&self, n: usize) -> usize {
        self.node_body[n]
    }

    /// Sorted, distinct body ids.
    pub fn body_ids(&self) -> Vec<usize> {
        self.element_body
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn body_nodes(&self, body: usize) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.node_body[n] == body)
            .collect()
    }

    pub fn body_elements(&self, body: usize) -> Vec<usize> {
        (0..self.num_elements())
            .filter(|&e| self.element_body[e] == body)
            .collect()
    }

    /// Signed measure (area or volume) of element `e` for the given flat
    /// coordinate array.
    pub fn signed_volume(&self, e: usize, coords: &[f64]) -> f64 {
        let d = self.dim;
        let nodes = self.element(e);
        let x0 = &coords[nodes[0] * d..nodes[0] * d + d];
        let mut j = [[0.0; 3]; 3];
        for k in 0..d {
            let xk = &coords[nodes[k + 1] * d..nodes[k + 1] * d + d];
            for a in 0..d {
                j[a][k] = xk[a] - x0[a];
            }
        }
        if d == 2 {
            0.5 * (j[0][0] * j[1][1] - j[0][1] * j[1][0])
        } else {
            (j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]))
                / 6.0
        }
    }

    /// Longest edge of element `e` for the given coordinates.
    pub fn max_edge_length(&self, e: usize, coords: &[f64]) -> f64 {
        let d = self.dim;
        let nodes = self.element(e);
        let mut longest: f64 = 0.0;
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                let l2: f64 = (0..d)
                    .map(|c| (coords[a * d + c] - coords[b * d + c]).powi(2))
                    .sum();
                longest = longest.max(l2.sqrt());
            }
        }
        longest
    }

    pub fn centroid(&self, e: usize, coords: &[f64]) -> [f64; 3] {
        let d = self.dim;
        let nodes = self.element(e);
        let mut c = [0.0; 3];
        for &n in nodes {
            for a in 0..d {
                c[a] += coords[n * d + a];
            }
        }
        for v in c.iter_mut().take(d) {
            *v /= nodes.len() as f64;
        }
        c
    }

    /// Lumped nodal measure: each element gives `V / (d + 1)` to its nodes.
    pub fn lumped_volumes(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes()];
        let npe = self.nodes_per_element() as f64;
        for e in 0..self.num_elements() {
            let v = self.signed_volume(e, &self.coords) / npe;
            for &n in self.element(e) {
                m[n] += v;
            }
        }
        m
    }

    /// Bounding box of the reference coordinates as `(min, max)`.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for x in self.coords.chunks(self.dim) {
            for a in 0..self.dim {
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
        }
        (lo, hi)
    }

    /// Returns the same mesh with every element relabelled to `body`.
    pub fn with_body(mut self, body: usize) -> Self {
        self.element_body.iter_mut().for_each(|b| *b = body);
        self.node_body.iter_mut().for_each(|b| *b = body);
        self
    }

    /// Concatenates meshes of the same dimension. Node and element indices of
    /// later parts are offset; body ids are kept.
    pub fn merge(parts: &[Mesh]) -> Result<Mesh> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidMesh("nothing to merge".into()));
        };
        let dim = first.dim;
        let mut coords = Vec::new();
        let mut conn = Vec::new();
        let mut bodies = Vec::new();
        for part in parts {
            if part.dim != dim {
                return Err(Error::InvalidMesh("cannot merge meshes of different dimension".into()));
            }
            let offset = coords.len() / dim;
            coords.extend_from_slice(&part.coords);
            conn.extend(part.conn.iter().map(|&n| n + offset));
            bodies.extend_from_slice(&part.element_body);
        }
        Mesh::new(dim, coords, conn, bodies)
    }
}

/// Nodal displacements on top of a mesh's reference configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub displacements: Vec<f64>,
}

impl Configuration {
    pub fn zero(mesh: &Mesh) -> Self {
        Configuration {
            displacements: vec![0.0; mesh.num_nodes() * mesh.dim()],
        }
    }

    pub fn from_displacements(mesh: &Mesh, displacements: Vec<f64>) -> Result<Self> {
        let expected = mesh.num_nodes() * mesh.dim();
        if displacements.len() != expected {
            return Err(Error::FieldLength {
                name: "displacements".into(),
                expected,
                found: displacements.len(),
            });
        }
        Ok(Configuration { displacements })
    }

    /// Deformed coordinates `X + u`, flat with stride `d`.
    pub fn current_coords(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.coords()
            .iter()
            .zip(&self.displacements)
            .map(|(x, u)| x + u)
            .collect()
    }

    /// First element whose deformed volume is not positive, if any.
    pub fn first_inverted(&self, mesh: &Mesh) -> Option<(usize, f64)> {
        let x = self.current_coords(mesh);
        (0..mesh.num_elements())
            .map(|e| (e, mesh.signed_volume(e, &x)))
            .find(|&(_, v)| !(v > 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> Mesh {
        Mesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 2], vec![0]).unwrap()
    }

    #[test]
    fn triangle_volume_and_edges() {
        let m = unit_triangle();
        assert_eq!(m.signed_volume(0, m.coords()), 0.5);
        assert!((m.max_edge_length(0, m.coords()) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.lumped_volumes(), vec![1.0 / 6.0; 3]);
    }

    #[test]
    fn rejects_inverted_and_bad_indices() {
        let err = Mesh::new(2, vec![0., 0., 0., 1., 1., 0.], vec![0, 1, 2], vec![0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateElement { element: 0, .. }));
        let err = Mesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 3], vec![0]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
        let err = Mesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 1], vec![0]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn rejects_mixed_body_nodes() {
        let coords = vec![0., 0., 1., 0., 0., 1., 1., 1.];
        let err = Mesh::new(2, coords, vec![0, 1, 2, 1, 3, 2], vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn zero_displacement_reproduces_reference() {
        let m = unit_triangle();
        let c = Configuration::zero(&m);
        assert_eq!(c.current_coords(&m), m.coords());
        assert!(c.first_inverted(&m).is_none());
    }

    #[test]
    fn merge_offsets_indices() {
        let a = unit_triangle();
        let b = unit_triangle().with_body(3);
        let m = Mesh::merge(&[a, b]).unwrap();
        assert_eq!(m.num_nodes(), 6);
        assert_eq!(m.element(1), &[3, 4, 5]);
        assert_eq!(m.body_ids(), vec![0, 3]);
        assert_eq!(m.node_body(4), 3);
    }
}
