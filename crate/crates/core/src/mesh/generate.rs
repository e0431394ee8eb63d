//! Small structured mesh generators used by the shipped scenarios and tests.
//!
//! All generators return single-body meshes with body id 0; relabel with
//! [`Mesh::with_body`].

use std::collections::HashMap;
use std::f64::consts::PI;

use super::Mesh;
use crate::error::{Error, Result};

fn divisions(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

/// Grid points on `[a, b]` that hit every breakpoint and have spacing at most `h`.
fn graded_axis(breaks: &[f64], h: f64) -> Vec<f64> {
    let mut b: Vec<f64> = breaks.to_vec();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut out = vec![b[0]];
    for w in b.windows(2) {
        let n = divisions(w[1] - w[0], h);
        for i in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
        }
    }
    out
}

/// Structured `nx` x `ny` rectangle, each cell split along its rising diagonal.
pub fn rectangle(min: [f64; 2], max: [f64; 2], nx: usize, ny: usize) -> Result<Mesh> {
    let xs: Vec<f64> = (0..=nx)
        .map(|i| min[0] + (max[0] - min[0]) * i as f64 / nx as f64)
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|j| min[1] + (max[1] - min[1]) * j as f64 / ny as f64)
        .collect();
    masked_grid(&xs, &ys, |_, _| true)
}

/// Rectangle with element size at most `h`.
pub fn rectangle_h(min: [f64; 2], max: [f64; 2], h: f64) -> Result<Mesh> {
    rectangle(
        min,
        max,
        divisions(max[0] - min[0], h),
        divisions(max[1] - min[1], h),
    )
}

/// Conforming mesh of a union of axis-aligned rectangles (e.g. a U-shaped
/// container). Grid lines pass through every rectangle edge.
pub fn rectangle_union(rects: &[([f64; 2], [f64; 2])], h: f64) -> Result<Mesh> {
    if rects.is_empty() {
        return Err(Error::InvalidMesh("empty rectangle union".into()));
    }
    let xb: Vec<f64> = rects.iter().flat_map(|r| [r.0[0], r.1[0]]).collect();
    let yb: Vec<f64> = rects.iter().flat_map(|r| [r.0[1], r.1[1]]).collect();
    let xs = graded_axis(&xb, h);
    let ys = graded_axis(&yb, h);
    masked_grid(&xs, &ys, |cx, cy| {
        rects
            .iter()
            .any(|(lo, hi)| cx > lo[0] && cx < hi[0] && cy > lo[1] && cy < hi[1])
    })
}

fn masked_grid(xs: &[f64], ys: &[f64], inside: impl Fn(f64, f64) -> bool) -> Result<Mesh> {
    let nx = xs.len() - 1;
    let ny = ys.len() - 1;
    let mut id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut coords = Vec::new();
    let mut conn = Vec::new();
    let mut node = |i: usize, j: usize, coords: &mut Vec<f64>| -> usize {
        *id.entry((i, j)).or_insert_with(|| {
            coords.push(xs[i]);
            coords.push(ys[j]);
            coords.len() / 2 - 1
        })
    };
    for j in 0..ny {
        for i in 0..nx {
            if !inside(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])) {
                continue;
            }
            let a = node(i, j, &mut coords);
            let b = node(i + 1, j, &mut coords);
            let c = node(i + 1, j + 1, &mut coords);
            let d = node(i, j + 1, &mut coords);
            conn.extend_from_slice(&[a, b, c, a, c, d]);
        }
    }
    let n = conn.len() / 3;
    Mesh::new(2, coords, conn, vec![0; n])
}

/// Triangulates the band between two closed rings given as `(parameter, node)`
/// lists sorted by parameter in `[0, 1)`.
fn stitch(inner: &[(f64, usize)], outer: &[(f64, usize)], conn: &mut Vec<[usize; 3]>) {
    let (na, nb) = (inner.len(), outer.len());
    let ta = |i: usize| if i >= na { 1.0 + inner[i - na].0 } else { inner[i].0 };
    let tb = |j: usize| if j >= nb { 1.0 + outer[j - nb].0 } else { outer[j].0 };
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let advance_inner = if i == na {
            false
        } else if j == nb {
            true
        } else {
            ta(i + 1) <= tb(j + 1)
        };
        if advance_inner {
            conn.push([inner[i % na].1, inner[(i + 1) % na].1, outer[j % nb].1]);
            i += 1;
        } else {
            conn.push([inner[i % na].1, outer[(j + 1) % nb].1, outer[j % nb].1]);
            j += 1;
        }
    }
}

fn oriented(coords: Vec<f64>, tris: Vec<[usize; 3]>) -> Result<Mesh> {
    let mut conn = Vec::with_capacity(tris.len() * 3);
    for [a, b, c] in tris {
        let area = (coords[2 * b] - coords[2 * a]) * (coords[2 * c + 1] - coords[2 * a + 1])
            - (coords[2 * b + 1] - coords[2 * a + 1]) * (coords[2 * c] - coords[2 * a]);
        if area >= 0.0 {
            conn.extend_from_slice(&[a, b, c]);
        } else {
            conn.extend_from_slice(&[a, c, b]);
        }
    }
    let n = conn.len() / 3;
    Mesh::new(2, coords, conn, vec![0; n])
}

/// Disk of radius `r` built from concentric rings of spacing about `h`.
pub fn disk(center: [f64; 2], r: f64, h: f64) -> Result<Mesh> {
    let rings = divisions(r, h);
    let mut coords = vec![center[0], center[1]];
    let mut tris = Vec::new();
    let mut prev: Vec<(f64, usize)> = vec![];
    for k in 1..=rings {
        let rk = r * k as f64 / rings as f64;
        let n = ((2.0 * PI * rk / h).round() as usize).max(6);
        let ring: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                coords.push(center[0] + rk * (2.0 * PI * t).cos());
                coords.push(center[1] + rk * (2.0 * PI * t).sin());
                (t, coords.len() / 2 - 1)
            })
            .collect();
        if k == 1 {
            for i in 0..n {
                tris.push([0, ring[i].1, ring[(i + 1) % n].1]);
            }
        } else {
            stitch(&prev, &ring, &mut tris);
        }
        prev = ring;
    }
    oriented(coords, tris)
}

/// Polygon that is star-shaped with respect to its vertex centroid, meshed by
/// rings of scaled copies of its outline. Vertices are given counter-clockwise.
pub fn star_polygon(vertices: &[[f64; 2]], h: f64) -> Result<Mesh> {
    if vertices.len() < 3 {
        return Err(Error::InvalidMesh("polygon needs at least three vertices".into()));
    }
    let nv = vertices.len() as f64;
    let c = [
        vertices.iter().map(|v| v[0]).sum::<f64>() / nv,
        vertices.iter().map(|v| v[1]).sum::<f64>() / nv,
    ];
    let edge_len: Vec<f64> = (0..vertices.len())
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .collect();
    let perimeter: f64 = edge_len.iter().sum();
    let reach = vertices
        .iter()
        .map(|v| ((v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let rings = divisions(reach, h);

    let mut coords = vec![c[0], c[1]];
    let mut tris = Vec::new();
    let mut prev: Vec<(f64, usize)> = vec![];
    for k in 1..=rings {
        let s = k as f64 / rings as f64;
        let mut ring = Vec::new();
        let mut arc = 0.0;
        for (i, &len) in edge_len.iter().enumerate() {
            let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
            let m = ((len * s / h).round() as usize).max(1);
            for q in 0..m {
                let f = q as f64 / m as f64;
                let p = [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
                coords.push(c[0] + s * (p[0] - c[0]));
                coords.push(c[1] + s * (p[1] - c[1]));
                ring.push(((arc + f * len) / perimeter, coords.len() / 2 - 1));
            }
            arc += len;
        }
        if k == 1 {
            let n = ring.len();
            for i in 0..n {
                tris.push([0, ring[i].1, ring[(i + 1) % n].1]);
            }
        } else {
            stitch(&prev, &ring, &mut tris);
        }
        prev = ring;
    }
    oriented(coords, tris)
}

/// Regular polygon with `sides` vertices, circumradius `r`, first vertex at
/// angle `phase` (radians).
pub fn regular_polygon(
    center: [f64; 2],
    r: f64,
    sides: usize,
    phase: f64,
    h: f64,
) -> Result<Mesh> {
    let vertices: Vec<[f64; 2]> = (0..sides)
        .map(|i| {
            let a = phase + 2.0 * PI * i as f64 / sides as f64;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect();
    star_polygon(&vertices, h)
}

fn oriented_tets(coords: Vec<f64>, tets: Vec<[usize; 4]>) -> Result<Mesh> {
    let x = |n: usize| [coords[3 * n], coords[3 * n + 1], coords[3 * n + 2]];
    let mut conn = Vec::with_capacity(tets.len() * 4);
    for [a, b, c, d] in tets {
        let (pa, pb, pc, pd) = (x(a), x(b), x(c), x(d));
        let u = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
        let v = [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]];
        let w = [pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]];
        let det = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
            + u[2] * (v[0] * w[1] - v[1] * w[0]);
        if det >= 0.0 {
            conn.extend_from_slice(&[a, b, c, d]);
        } else {
            conn.extend_from_slice(&[a, c, b, d]);
        }
    }
    let n = conn.len() / 4;
    Mesh::new(3, coords, conn, vec![0; n])
}

/// Structured box, each hexahedral cell split into six tetrahedra around its
/// main diagonal (conforming across cells).
pub fn block(min: [f64; 3], max: [f64; 3], n: [usize; 3]) -> Result<Mesh> {
    let idx = |i: usize, j: usize, k: usize| (k * (n[1] + 1) + j) * (n[0] + 1) + i;
    let mut coords = Vec::new();
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                coords.push(min[0] + (max[0] - min[0]) * i as f64 / n[0] as f64);
                coords.push(min[1] + (max[1] - min[1]) * j as f64 / n[1] as f64);
                coords.push(min[2] + (max[2] - min[2]) * k as f64 / n[2] as f64);
            }
        }
    }
    // Kuhn triangulation: paths from corner 0 to corner 7 along unit steps.
    const PATHS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for path in PATHS {
                    let mut p = [i, j, k];
                    let mut t = [idx(i, j, k), 0, 0, 0];
                    for (s, &axis) in path.iter().enumerate() {
                        p[axis] += 1;
                        t[s + 1] = idx(p[0], p[1], p[2]);
                    }
                    tets.push(t);
                }
            }
        }
    }
    oriented_tets(coords, tets)
}

pub fn block_h(min: [f64; 3], max: [f64; 3], h: f64) -> Result<Mesh> {
    block(
        min,
        max,
        [
            divisions(max[0] - min[0], h),
            divisions(max[1] - min[1], h),
            divisions(max[2] - min[2], h),
        ],
    )
}

/// Extrudes a planar triangle mesh along `z` from `z0` through `height` in
/// `layers` layers. Layer `l` is scaled about `axis` by `scale(l / layers)`,
/// which turns a disk into a cylinder (constant 1) or a cone frustum.
pub fn extrude(
    base: &Mesh,
    z0: f64,
    height: f64,
    layers: usize,
    axis: [f64; 2],
    scale: impl Fn(f64) -> f64,
) -> Result<Mesh> {
    if base.dim() != 2 {
        return Err(Error::InvalidMesh("extrusion needs a 2D base mesh".into()));
    }
    let n2 = base.num_nodes();
    let mut coords = Vec::with_capacity(3 * n2 * (layers + 1));
    for l in 0..=layers {
        let f = l as f64 / layers as f64;
        let s = scale(f);
        for p in base.coords().chunks(2) {
            coords.push(axis[0] + s * (p[0] - axis[0]));
            coords.push(axis[1] + s * (p[1] - axis[1]));
            coords.push(z0 + height * f);
        }
    }
    let mut tets = Vec::new();
    for l in 0..layers {
        let bot = |v: usize| l * n2 + v;
        let top = |v: usize| (l + 1) * n2 + v;
        for el in base.elements() {
            let mut t = [el[0], el[1], el[2]];
            t.sort_unstable();
            let [a, b, c] = t;
            // Quad diagonals run from the lower bottom index to the higher top
            // index, so neighbouring prisms agree on shared faces.
            tets.push([bot(a), bot(b), bot(c), top(c)]);
            tets.push([bot(a), bot(b), top(b), top(c)]);
            tets.push([bot(a), top(a), top(b), top(c)]);
        }
    }
    oriented_tets(coords, tets)
}

/// Cyclic relabelling of the axes followed by a translation. A cyclic
/// permutation keeps element orientation.
pub fn place(mesh: &Mesh, shift: usize, offset: &[f64]) -> Result<Mesh> {
    let d = mesh.dim();
    let mut coords = Vec::with_capacity(mesh.coords().len());
    for x in mesh.coords().chunks(d) {
        for a in 0..d {
            coords.push(x[(a + d - shift % d) % d] + offset[a]);
        }
    }
    let conn: Vec<usize> = mesh.elements().flatten().copied().collect();
    let bodies = (0..mesh.num_elements()).map(|e| mesh.element_body(e)).collect();
    Mesh::new(d, coords, conn, bodies)
}

/// Circular sector (pie slice) with apex `apex`, radius `r` and opening
/// `angle` (radians) starting at direction `phase`.
pub fn sector(apex: [f64; 2], r: f64, phase: f64, angle: f64, h: f64) -> Result<Mesh> {
    let arc = ((r * angle / h).ceil() as usize).max(2);
    let mut vertices = vec![apex];
    for i in 0..=arc {
        let a = phase + angle * i as f64 / arc as f64;
        vertices.push([apex[0] + r * a.cos(), apex[1] + r * a.sin()]);
    }
    star_polygon(&vertices, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::extract_boundary;

    fn total_volume(m: &Mesh) -> f64 {
        (0..m.num_elements())
            .map(|e| m.signed_volume(e, m.coords()))
            .sum()
    }

    #[test]
    fn rectangle_counts() {
        let m = rectangle([0., 0.], [2., 1.], 4, 3).unwrap();
        assert_eq!(m.num_nodes(), 20);
        assert_eq!(m.num_elements(), 24);
        assert!((total_volume(&m) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn structured_square_has_4n_exterior_edges() {
        for n in [1, 2, 5, 9] {
            let m = rectangle([0., 0.], [1., 1.], n, n).unwrap();
            let b = extract_boundary(&m);
            assert_eq!(b.exterior_faces.len(), 4 * n);
            assert_eq!(b.all_exterior_nodes().len(), 4 * n);
        }
    }

    #[test]
    fn union_of_rectangles_is_conforming() {
        let m = rectangle_union(
            &[
                ([0.0, 0.0], [0.7, 0.05]),
                ([0.0, 0.0], [0.05, 0.5]),
                ([0.65, 0.0], [0.7, 0.5]),
            ],
            0.02,
        )
        .unwrap();
        let area = 0.7 * 0.05 + 2.0 * 0.05 * 0.45;
        assert!((total_volume(&m) - area).abs() < 1e-12);
        // A closed polygon boundary has as many edges as nodes.
        let b = extract_boundary(&m);
        assert_eq!(b.exterior_faces.len(), b.all_exterior_nodes().len());
    }

    #[test]
    fn disk_area_converges() {
        let m = disk([0., 0.], 1.0, 0.05).unwrap();
        let a = total_volume(&m);
        assert!((a - PI).abs() / PI < 5e-3, "area {a}");
        let b = extract_boundary(&m);
        for n in b.all_exterior_nodes() {
            let p = m.node(n);
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hexagon_keeps_vertices_and_area() {
        let r = 0.12;
        let m = regular_polygon([0.2, 0.3], r, 6, 0.0, 0.02).unwrap();
        let exact = 1.5 * 3f64.sqrt() * r * r;
        assert!((total_volume(&m) - exact).abs() < 1e-12);
    }

    #[test]
    fn block_and_extrusion_are_closed_surfaces() {
        let boxes = block([0., 0., 0.], [1., 2., 1.], [2, 3, 2]).unwrap();
        assert!((total_volume(&boxes) - 2.0).abs() < 1e-12);
        let base = disk([0., 0.], 1.0, 0.4).unwrap();
        let cyl = extrude(&base, 0.0, 1.0, 3, [0., 0.], |_| 1.0).unwrap();
        let cone = extrude(&base, 0.0, 1.0, 3, [0., 0.], |t| 1.0 - 0.9 * t).unwrap();
        for m in [&boxes, &cyl, &cone] {
            let b = extract_boundary(m);
            let faces: Vec<Vec<usize>> = (0..b.exterior_faces.len())
                .map(|f| b.face_nodes(m, f))
                .collect();
            let mut edges = std::collections::HashSet::new();
            for f in &faces {
                for i in 0..3 {
                    let (a, c) = (f[i], f[(i + 1) % 3]);
                    edges.insert((a.min(c), a.max(c)));
                }
            }
            let v = b.all_exterior_nodes().len() as i64;
            let chi = v - edges.len() as i64 + faces.len() as i64;
            assert_eq!(chi, 2);
        }
    }

    #[test]
    fn placed_cylinder_keeps_orientation() {
        let base = disk([0., 0.], 1.0, 0.4).unwrap();
        let cyl = extrude(&base, 0.0, 3.0, 5, [0., 0.], |_| 1.0).unwrap();
        let m = place(&cyl, 1, &[0.0, 5.0, 1.0]).unwrap();
        let (lo, hi) = m.bounding_box();
        assert!((hi[0] - lo[0] - 3.0).abs() < 1e-12);
        assert!((lo[1] - 4.0).abs() < 1e-12 && (lo[2] - 0.0).abs() < 1e-12);
        assert!((total_volume(&m) - total_volume(&cyl)).abs() < 1e-12);
    }

    #[test]
    fn sector_area() {
        let a = std::f64::consts::PI / 6.0;
        let m = sector([0., 0.], 3.2, 0.0, a, 0.2).unwrap();
        let exact = 0.5 * 3.2 * 3.2 * a;
        // Polygonal arc: slightly below the exact area.
        let v = total_volume(&m);
        assert!(v < exact && v > 0.99 * exact, "{v} {exact}");
    }
}
