//! Legacy VTK (ASCII, unstructured grid) snapshots of the deformed mesh.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Configuration, Mesh};
use crate::error::{Error, Result};

const VTK_TRIANGLE: u8 = 5;
const VTK_TETRA: u8 = 10;

/// Writes the deformed mesh with a `displacement` vector array, a `body`
/// array and the given nodal scalar fields.
pub fn write_snapshot(
    mesh: &Mesh,
    config: &Configuration,
    fields: &[(&str, &[f64])],
    path: impl AsRef<Path>,
) -> Result<()> {
    let n = mesh.num_nodes();
    let d = mesh.dim();
    if config.displacements.len() != n * d {
        return Err(Error::FieldLength {
            name: "displacements".into(),
            expected: n * d,
            found: config.displacements.len(),
        });
    }
    for (name, values) in fields {
        if values.len() != n {
            return Err(Error::FieldLength {
                name: (*name).to_string(),
                expected: n,
                found: values.len(),
            });
        }
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(Error::InvalidMesh(format!("invalid field name `{name}`")));
        }
    }
    let x = config.current_coords(mesh);
    let npe = mesh.nodes_per_element();
    let cell_type = if d == 2 { VTK_TRIANGLE } else { VTK_TETRA };

    let mut s = String::with_capacity(64 * n);
    s.push_str("# vtk DataFile Version 3.0\nadfc snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in x.chunks(d) {
        let z = if d == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], z);
    }
    let m = mesh.num_elements();
    let _ = writeln!(s, "CELLS {m} {}", m * (npe + 1));
    for el in mesh.elements() {
        let _ = write!(s, "{npe}");
        for v in el {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "{cell_type}");
    }
    let _ = writeln!(s, "CELL_DATA {m}\nSCALARS body int 1\nLOOKUP_TABLE default");
    for e in 0..m {
        let _ = writeln!(s, "{}", mesh.element_body(e));
    }
    let _ = writeln!(s, "POINT_DATA {n}\nVECTORS displacement double");
    for u in config.displacements.chunks(d) {
        let z = if d == 3 { u[2] } else { 0.0 };
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", u[0], u[1], z);
    }
    for (name, values) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in *values {
            let _ = writeln!(s, "{v:.17e}");
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Contents of a snapshot written by [`write_snapshot`].
#[derive(Clone, Debug, Default)]
pub struct Snapshot {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_scalars: BTreeMap<String, Vec<f64>>,
    pub point_vectors: BTreeMap<String, Vec<[f64; 3]>>,
}

/// Reads back the subset of legacy VTK produced by [`write_snapshot`].
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut toks = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let bad = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut snap = Snapshot::default();
    let mut section = "";
    let mut point_count = 0usize;

    let mut skipped_header = false;
    while let Some((ln, tok)) = toks.next() {
        // Everything up to the DATASET line is header.
        if !skipped_header {
            if tok == "UNSTRUCTURED_GRID" {
                skipped_header = true;
            }
            continue;
        }
        let mut next = |what: &str| toks.next().ok_or_else(|| bad(ln, what));
        match tok {
            "POINTS" => {
                point_count = parse_usize(next("point count")?, ln, path)?;
                let _ty = next("point type")?;
                for _ in 0..point_count {
                    let mut p = [0.0; 3];
                    for v in &mut p {
                        let (l, t) = next("coordinate")?;
                        *v = t.parse().map_err(|_| bad(l, "bad coordinate"))?;
                    }
                    snap.points.push(p);
                }
            }
            "CELLS" => {
                let count = parse_usize(next("cell count")?, ln, path)?;
                let _size = next("cell list size")?;
                for _ in 0..count {
                    let k = parse_usize(next("cell size")?, ln, path)?;
                    let mut cell = Vec::with_capacity(k);
                    for _ in 0..k {
                        cell.push(parse_usize(next("cell index")?, ln, path)?);
                    }
                    snap.cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let count = parse_usize(next("cell type count")?, ln, path)?;
                for _ in 0..count {
                    let (l, t) = next("cell type")?;
                    snap.cell_types.push(t.parse().map_err(|_| bad(l, "bad cell type"))?);
                }
            }
            "CELL_DATA" => {
                section = "cell";
                let _ = next("cell data count")?;
            }
            "POINT_DATA" => {
                section = "point";
                let _ = next("point data count")?;
            }
            "SCALARS" => {
                let (_, name) = next("scalar name")?;
                let name = name.to_string();
                let _ty = next("scalar type")?;
                let _ncomp = next("components")?;
                let _lt = next("LOOKUP_TABLE")?;
                let _lt_name = next("table name")?;
                let count = if section == "point" {
                    point_count
                } else {
                    snap.cells.len()
                };
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    let (l, t) = next("scalar value")?;
                    values.push(t.parse::<f64>().map_err(|_| bad(l, "bad scalar"))?);
                }
                if section == "point" {
                    snap.point_scalars.insert(name, values);
                }
            }
            "VECTORS" => {
                let (_, name) = next("vector name")?;
                let name = name.to_string();
                let _ty = next("vector type")?;
                let mut values = Vec::with_capacity(point_count);
                for _ in 0..point_count {
                    let mut p = [0.0; 3];
                    for v in &mut p {
                        let (l, t) = next("vector component")?;
                        *v = t.parse().map_err(|_| bad(l, "bad vector component"))?;
                    }
                    values.push(p);
                }
                snap.point_vectors.insert(name, values);
            }
            other => return Err(bad(ln, &format!("unexpected token `{other}`"))),
        }
    }
    Ok(snap)
}

fn parse_usize(tok: (usize, &str), _ln: usize, path: &Path) -> Result<usize> {
    tok.1.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: tok.0,
        msg: format!("expected an integer, found `{}`", tok.1),
    })
}
