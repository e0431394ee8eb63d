//! Broad phase (uniform bucket grid) and narrow phase (closed-form
//! containment) producing one target element per interfering exterior node.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::adf::ScalarField;
use crate::contact::{contact_gap, project_to_simplex, TargetAssignment};
use crate::error::{Error, Result};
use crate::fem::shape::shape_values;
use crate::mesh::{BoundaryInfo, Mesh};

/// Tolerance on shape values when testing containment.
pub const CONTAINMENT_TOL: f64 = 1e-12;

/// Looser containment under which a node keeps its previous target element
/// when the new one belongs to the same body. Without it a node near an
/// edge can flip between two elements whose gap gradients differ.
pub const STICKY_TOL: f64 = 0.05;

type Cell = [i64; 3];

/// Elements binned by deformed centroid and exterior nodes by position.
/// Points on a cell face belong to the cell above (`floor(x / size)`).
#[derive(Clone, Debug)]
pub struct BucketGrid {
    size: f64,
    dim: usize,
    elements: HashMap<Cell, Vec<usize>>,
    nodes: HashMap<Cell, Vec<usize>>,
}

impl BucketGrid {
    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.size
    }

    pub fn cell_of(&self, x: &[f64]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..self.dim {
            c[a] = (x[a] / self.size).floor() as i64;
        }
        c
    }

    pub fn elements_in(&self, cell: [i64; 3]) -> &[usize] {
        self.elements.get(&cell).map_or(&[], |v| v.as_slice())
    }

    pub fn nodes_in(&self, cell: [i64; 3]) -> &[usize] {
        self.nodes.get(&cell).map_or(&[], |v| v.as_slice())
    }

    /// Occupied element cells, sorted.
    pub fn element_cells(&self) -> Vec<[i64; 3]> {
        let mut v: Vec<_> = self.elements.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Occupied node cells, sorted.
    pub fn node_cells(&self) -> Vec<[i64; 3]> {
        let mut v: Vec<_> = self.nodes.keys().copied().collect();
        v.sort_unstable();
        v
    }

    fn neighbourhood(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let r3 = if self.dim == 3 { -1..=1 } else { 0..=0 };
        r3.flat_map(move |dz| {
            (-1..=1).flat_map(move |dy| (-1..=1).map(move |dx| [c[0] + dx, c[1] + dy, c[2] + dz]))
        })
    }
}

/// Grid on `coords` with cell size `max(min_size, longest element edge)`.
pub fn build_grid_with(mesh: &Mesh, coords: &[f64], boundary: &BoundaryInfo, min_size: f64) -> BucketGrid {
    let h = (0..mesh.num_elements())
        .map(|e| mesh.max_edge_length(e, coords))
        .fold(min_size, f64::max);
    let size = if h > 0.0 { h } else { 1.0 };
    let mut grid = BucketGrid {
        size,
        dim: mesh.dim(),
        elements: HashMap::new(),
        nodes: HashMap::new(),
    };
    for e in 0..mesh.num_elements() {
        let c = grid.cell_of(&mesh.centroid(e, coords));
        grid.elements.entry(c).or_default().push(e);
    }
    let d = mesh.dim();
    for n in boundary.all_exterior_nodes() {
        let c = grid.cell_of(&coords[n * d..(n + 1) * d]);
        grid.nodes.entry(c).or_default().push(n);
    }
    grid
}

pub fn build_grid(mesh: &Mesh, coords: &[f64], boundary: &BoundaryInfo) -> BucketGrid {
    build_grid_with(mesh, coords, boundary, 0.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Sorted by incident node.
    pub assignments: Vec<TargetAssignment>,
    pub changed: bool,
    /// `(node, element)` pairs of the previous report that are gone.
    pub released: Vec<(usize, usize)>,
}

impl DetectionReport {
    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.assignments.iter().map(|a| (a.node, a.element)).collect()
    }
}

struct Candidate {
    element: usize,
    body: usize,
    xi: [f64; 3],
    g: f64,
}

fn contains(mesh: &Mesh, coords: &[f64], e: usize, x: &[f64], tol: f64) -> Option<[f64; 3]> {
    let d = mesh.dim();
    let mut xn = [0.0; 12];
    for (k, &n) in mesh.element(e).iter().enumerate() {
        xn[k * d..(k + 1) * d].copy_from_slice(&coords[n * d..(n + 1) * d]);
    }
    let xi = project_to_simplex(&xn[..(d + 1) * d], x, d).ok()?;
    let n = shape_values(&xi[..d]);
    n[..=d]
        .iter()
        .all(|&v| (-tol..=1.0 + tol).contains(&v))
        .then_some(xi)
}

fn candidate(
    mesh: &Mesh,
    coords: &[f64],
    field: Option<&ScalarField>,
    node: usize,
    e: usize,
    tol: f64,
) -> Result<Option<Candidate>> {
    let d = mesh.dim();
    let x = &coords[node * d..(node + 1) * d];
    let Some(xi) = contains(mesh, coords, e, x, tol) else {
        return Ok(None);
    };
    let g = match field {
        Some(f) => {
            let mut xc = Vec::with_capacity(d * (d + 2));
            let mut phi = Vec::with_capacity(d + 1);
            for &n in mesh.element(e) {
                xc.extend_from_slice(&coords[n * d..(n + 1) * d]);
                phi.push(f.phi[n]);
            }
            xc.extend_from_slice(x);
            contact_gap(&xc, &phi, f.params, d).map_err(|err| match err {
                Error::NonPositivePhi { value, .. } => Error::NonPositivePhi { element: e, value },
                other => other,
            })?
        }
        None => f64::NAN,
    };
    Ok(Some(Candidate {
        element: e,
        body: mesh.element_body(e),
        xi,
        g,
    }))
}

/// Within one body the smallest element index wins; across bodies the
/// smallest gap (then the smallest index).
fn choose(mut cands: Vec<Candidate>) -> Option<Candidate> {
    cands.sort_by_key(|c| (c.body, c.element));
    cands.dedup_by_key(|c| c.body);
    cands.into_iter().min_by(|a, b| {
        let ga = if a.g.is_nan() { 0.0 } else { a.g };
        let gb = if b.g.is_nan() { 0.0 } else { b.g };
        ga.total_cmp(&gb).then(a.element.cmp(&b.element))
    })
}

fn previous_targets(previous: Option<&DetectionReport>) -> HashMap<usize, usize> {
    previous
        .map(|p| p.assignments.iter().map(|a| (a.node, a.element)).collect())
        .unwrap_or_default()
}

/// Keeps the previous target of `node` if it lies in the winner's body and
/// still contains the node up to [`STICKY_TOL`].
fn sticky(
    mesh: &Mesh,
    coords: &[f64],
    field: Option<&ScalarField>,
    node: usize,
    winner: Candidate,
    prev: &HashMap<usize, usize>,
) -> Result<Candidate> {
    match prev.get(&node) {
        Some(&e) if e != winner.element && mesh.element_body(e) == winner.body => {
            Ok(candidate(mesh, coords, field, node, e, STICKY_TOL)?.unwrap_or(winner))
        }
        _ => Ok(winner),
    }
}

fn finish(assignments: Vec<TargetAssignment>, previous: Option<&DetectionReport>) -> DetectionReport {
    let mut report = DetectionReport {
        assignments,
        changed: false,
        released: Vec::new(),
    };
    report.assignments.sort_by_key(|a| a.node);
    let now = report.pairs();
    let before = previous.map(|p| p.pairs()).unwrap_or_default();
    report.changed = now != before;
    report.released = before.difference(&now).copied().collect();
    report
}

fn assignment(node: usize, c: Candidate) -> TargetAssignment {
    TargetAssignment {
        node,
        element: c.element,
        xi: c.xi,
        g: c.g,
        weight: 1.0,
    }
}

/// Grid-accelerated detection. `field` supplies gaps for tie-breaking and
/// reporting (`g` is NaN without it).
pub fn detect(
    mesh: &Mesh,
    coords: &[f64],
    grid: &BucketGrid,
    field: Option<&ScalarField>,
    previous: Option<&DetectionReport>,
) -> Result<DetectionReport> {
    let d = mesh.dim();
    let prev = previous_targets(previous);
    let mut out = Vec::new();
    let mut node_cells = grid.node_cells();
    node_cells.sort_unstable();
    for cell in node_cells {
        for &node in grid.nodes_in(cell) {
            let body = mesh.node_body(node);
            let x = &coords[node * d..(node + 1) * d];
            let mut cands = Vec::new();
            for nc in grid.neighbourhood(cell) {
                for &e in grid.elements_in(nc) {
                    if mesh.element_body(e) == body {
                        continue;
                    }
                    // A point inside a simplex lies within one edge length of its centroid.
                    let c = mesh.centroid(e, coords);
                    let dist = (0..d).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                    if dist > 2.0 * mesh.max_edge_length(e, coords) {
                        continue;
                    }
                    if let Some(c) = candidate(mesh, coords, field, node, e, CONTAINMENT_TOL)? {
                        cands.push(c);
                    }
                }
            }
            if let Some(c) = choose(cands) {
                out.push(assignment(node, sticky(mesh, coords, field, node, c, &prev)?));
            }
        }
    }
    Ok(finish(out, previous))
}

/// All-pairs reference implementation of [`detect`].
pub fn detect_brute_force(
    mesh: &Mesh,
    coords: &[f64],
    boundary: &BoundaryInfo,
    field: Option<&ScalarField>,
    previous: Option<&DetectionReport>,
) -> Result<DetectionReport> {
    let prev = previous_targets(previous);
    let mut out = Vec::new();
    for node in boundary.all_exterior_nodes() {
        let body = mesh.node_body(node);
        let mut cands = Vec::new();
        for e in 0..mesh.num_elements() {
            if mesh.element_body(e) == body {
                continue;
            }
            if let Some(c) = candidate(mesh, coords, field, node, e, CONTAINMENT_TOL)? {
                cands.push(c);
            }
        }
        if let Some(c) = choose(cands) {
            out.push(assignment(node, sticky(mesh, coords, field, node, c, &prev)?));
        }
    }
    Ok(finish(out, previous))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_boundary, generate};

    #[test]
    fn single_element_lands_in_origin_cell() {
        let m = Mesh::new(2, vec![0., 0., 0.5, 0., 0., 0.5], vec![0, 1, 2], vec![0]).unwrap();
        let b = extract_boundary(&m);
        let g = build_grid_with(&m, m.coords(), &b, 1.0);
        assert_eq!(g.cell_size(), 1.0);
        assert_eq!(g.element_cells(), vec![[0, 0, 0]]);
        assert_eq!(g.cell_of(&[1.0, -1e-300]), [1, -1, 0]);
    }

    #[test]
    fn separated_bodies_have_no_contact() {
        let a = generate::rectangle([0., 0.], [1., 1.], 3, 3).unwrap();
        let b = generate::rectangle([2., 0.], [3., 1.], 3, 3).unwrap().with_body(1);
        let m = Mesh::merge(&[a, b]).unwrap();
        let bd = extract_boundary(&m);
        let grid = build_grid(&m, m.coords(), &bd);
        let r = detect(&m, m.coords(), &grid, None, None).unwrap();
        assert!(r.assignments.is_empty() && !r.changed);
    }

    #[test]
    fn constructed_containment() {
        // Body 1 is a single triangle whose vertex sits inside element 0 of body 0.
        let m = Mesh::new(
            2,
            vec![0., 0., 1., 0., 0., 1., 0.2, 0.2, 1.2, 0.2, 0.2, 1.2],
            vec![0, 1, 2, 3, 4, 5],
            vec![0, 1],
        )
        .unwrap();
        let b = extract_boundary(&m);
        let grid = build_grid(&m, m.coords(), &b);
        let r = detect(&m, m.coords(), &grid, None, None).unwrap();
        let pairs: Vec<_> = r.pairs().into_iter().collect();
        assert_eq!(pairs, vec![(3, 0)]);
        assert!(r.changed);
        assert!((r.assignments[0].xi[0] - 0.2).abs() < 1e-15);
        let again = detect(&m, m.coords(), &grid, None, Some(&r)).unwrap();
        assert!(!again.changed);
        let empty = detect(&m, m.coords(), &grid, None, Some(&DetectionReport::default()))
            .unwrap();
        assert!(empty.changed);
        let mut far = m.coords().to_vec();
        for v in &mut far[6..] {
            *v += 5.0;
        }
        let grid = build_grid(&m, &far, &b);
        let gone = detect(&m, &far, &grid, None, Some(&r)).unwrap();
        assert!(gone.changed);
        assert_eq!(gone.released, vec![(3, 0)]);
    }

    #[test]
    fn shared_face_tie_goes_to_smaller_element() {
        let a = generate::rectangle([0., 0.], [1., 1.], 1, 1).unwrap();
        // Node of body 1 exactly on the diagonal shared by both triangles.
        let b = Mesh::new(2, vec![0.5, 0.5, 2., 0.5, 2., 2.], vec![0, 1, 2], vec![0])
            .unwrap()
            .with_body(1);
        let m = Mesh::merge(&[a, b]).unwrap();
        let bd = extract_boundary(&m);
        let r = detect(&m, m.coords(), &build_grid(&m, m.coords(), &bd), None, None).unwrap();
        let brute = detect_brute_force(&m, m.coords(), &bd, None, None).unwrap();
        assert_eq!(r.pairs(), brute.pairs());
        let hits: Vec<_> = r.assignments.iter().filter(|a| a.node == 4).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].element, 0);
    }
}
