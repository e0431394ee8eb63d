use std::collections::{BTreeMap, HashMap};

use super::Mesh;

/// Exterior faces (edges in 2D) and exterior nodes of every body.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryInfo {
    /// `(element, local face)` pairs; local face `k` is the face opposite local node `k`.
    pub exterior_faces: Vec<(usize, usize)>,
    /// Sorted exterior nodes per body id.
    pub exterior_nodes: BTreeMap<usize, Vec<usize>>,
    is_exterior: Vec<bool>,
    node_faces: Vec<Vec<usize>>,
}

impl BoundaryInfo {
    #[inline]
    pub fn is_exterior(&self, node: usize) -> bool {
        self.is_exterior[node]
    }

    /// All exterior nodes, sorted.
    pub fn all_exterior_nodes(&self) -> Vec<usize> {
        (0..self.is_exterior.len())
            .filter(|&n| self.is_exterior[n])
            .collect()
    }

    /// Indices into `exterior_faces` of the faces touching `node`.
    pub fn faces_of_node(&self, node: usize) -> &[usize] {
        &self.node_faces[node]
    }

    /// Global node indices of exterior face `f`, in element order.
    pub fn face_nodes(&self, mesh: &Mesh, f: usize) -> Vec<usize> {
        let (e, k) = self.exterior_faces[f];
        local_face(mesh.element(e), k)
    }
}

fn local_face(element: &[usize], skip: usize) -> Vec<usize> {
    element
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &n)| n)
        .collect()
}

/// Finds the faces that belong to exactly one element and the nodes on them.
pub fn extract_boundary(mesh: &Mesh) -> BoundaryInfo {
    let npe = mesh.nodes_per_element();
    let mut count: HashMap<[usize; 3], (usize, usize, usize)> = HashMap::new();
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        for k in 0..npe {
            let mut key = [usize::MAX; 3];
            for (slot, n) in key.iter_mut().zip(local_face(el, k)) {
                *slot = n;
            }
            key.sort_unstable();
            count
                .entry(key)
                .and_modify(|c| c.0 += 1)
                .or_insert((1, e, k));
        }
    }
    let mut exterior_faces: Vec<(usize, usize)> = count
        .into_values()
        .filter(|&(c, _, _)| c == 1)
        .map(|(_, e, k)| (e, k))
        .collect();
    exterior_faces.sort_unstable();

    let mut is_exterior = vec![false; mesh.num_nodes()];
    let mut node_faces = vec![Vec::new(); mesh.num_nodes()];
    for (f, &(e, k)) in exterior_faces.iter().enumerate() {
        for n in local_face(mesh.element(e), k) {
            is_exterior[n] = true;
            node_faces[n].push(f);
        }
    }
    let mut exterior_nodes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (n, _) in is_exterior.iter().enumerate().filter(|(_, &x)| x) {
        exterior_nodes.entry(mesh.node_body(n)).or_default().push(n);
    }
    BoundaryInfo {
        exterior_faces,
        exterior_nodes,
        is_exterior,
        node_faces,
    }
}
