//! Penalty correction for the patch test: κ scaled by the boundary measure
//! an incident node represents.

use super::element::{ContactParams, PenaltyWeighting};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryInfo, Mesh};

/// Measure and unit normal of an exterior face (edge in 2D).
fn face_measure(mesh: &Mesh, coords: &[f64], nodes: &[usize]) -> (f64, [f64; 3]) {
    let d = mesh.dim();
    let p = |n: usize| {
        let mut v = [0.0; 3];
        v[..d].copy_from_slice(&coords[n * d..(n + 1) * d]);
        v
    };
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let (area, n) = if d == 2 {
        let t = sub(p(nodes[1]), p(nodes[0]));
        let l = t[0].hypot(t[1]);
        (l, [-t[1], t[0], 0.0])
    } else {
        let (a, b) = (sub(p(nodes[1]), p(nodes[0])), sub(p(nodes[2]), p(nodes[0])));
        let c = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let l = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        (0.5 * l, c)
    };
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let unit = if len > 0.0 { n.map(|v| v / len) } else { [0.0; 3] };
    (area, unit)
}

/// `(1/d) Σ_f |f|` over the exterior faces touching `node` (half the adjacent
/// edge lengths in 2D, a third of the adjacent face areas in 3D). With a
/// contact `normal`, each face counts by its projection `|n_f · n|`, so faces
/// running along the contact direction (block sides) do not contribute.
pub fn tributary_measure(
    mesh: &Mesh,
    coords: &[f64],
    boundary: &BoundaryInfo,
    node: usize,
    normal: Option<[f64; 3]>,
) -> Result<f64> {
    let faces = boundary.faces_of_node(node);
    if faces.is_empty() {
        return Err(Error::NotExterior { node });
    }
    let mut w = 0.0;
    for &f in faces {
        let (area, nf) = face_measure(mesh, coords, &boundary.face_nodes(mesh, f));
        let proj = match normal {
            Some(n) => (nf[0] * n[0] + nf[1] * n[1] + nf[2] * n[2]).abs(),
            None => 1.0,
        };
        w += area * proj;
    }
    Ok(w / mesh.dim() as f64)
}

/// Effective penalty of an incident node. `normal` is the contact normal at
/// detection; weighting is skipped unless enabled in `params`.
pub fn weighted_penalty(
    mesh: &Mesh,
    coords: &[f64],
    boundary: &BoundaryInfo,
    node: usize,
    normal: Option<[f64; 3]>,
    params: &ContactParams,
) -> Result<f64> {
    match params.penalty_weighting {
        PenaltyWeighting::None => Ok(params.kappa),
        PenaltyWeighting::EdgeProjection => {
            Ok(params.kappa * tributary_measure(mesh, coords, boundary, node, normal)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_boundary, generate};

    #[test]
    fn uniform_spacing_and_corners() {
        let s = 0.25;
        let m = generate::rectangle([0., 0.], [1., 1.], 4, 4).unwrap();
        let b = extract_boundary(&m);
        let c = m.coords();
        let down = Some([0.0, -1.0, 0.0]);
        for n in b.all_exterior_nodes() {
            let x = m.node(n);
            if x[1] != 0.0 {
                continue;
            }
            let w = tributary_measure(&m, c, &b, n, down).unwrap();
            let expected = if x[0] == 0.0 || x[0] == 1.0 { s / 2.0 } else { s };
            assert!((w - expected).abs() < 1e-14, "{x:?} {w}");
            // Without projection every boundary node of the closed loop gets s.
            let w = tributary_measure(&m, c, &b, n, None).unwrap();
            assert!((w - s).abs() < 1e-14);
        }
        let interior = (0..m.num_nodes()).find(|&n| !b.is_exterior(n)).unwrap();
        assert!(matches!(
            tributary_measure(&m, c, &b, interior, None),
            Err(Error::NotExterior { .. })
        ));
    }

    #[test]
    fn open_chain_end_gets_half() {
        // Two triangles in a row; the boundary of node 0 has one bottom edge.
        let m = Mesh::new(
            2,
            vec![0., 0., 1., 0., 2., 0., 0., 1., 1., 1.],
            vec![0, 1, 3, 1, 2, 4, 1, 4, 3],
            vec![0, 0, 0],
        )
        .unwrap();
        let b = extract_boundary(&m);
        let w = tributary_measure(&m, m.coords(), &b, 0, Some([0., 1., 0.])).unwrap();
        assert!((w - 0.5).abs() < 1e-14);
        let w = tributary_measure(&m, m.coords(), &b, 1, Some([0., 1., 0.])).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
    }
}
