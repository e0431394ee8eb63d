//! Plain-text mesh format:
//!
//! ```text
//! dim <2|3>
//! nodes <N>
//! <x> <y> [<z>]          (N lines)
//! elements <M>
//! <body> <n1> ... <n(d+1)>  (M lines, 0-based node indices)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

/// Parses mesh text; `origin` is only used in error messages.
pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut header = |keyword: &str| -> Result<(usize, usize)> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected `{keyword}`")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(keyword) {
            return Err(err(ln, format!("expected `{keyword} <count>`")));
        }
        let v = it
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err(ln, format!("`{keyword}` needs a non-negative integer")))?;
        if it.next().is_some() {
            return Err(err(ln, "trailing tokens".into()));
        }
        Ok((ln, v))
    };

    let (ln, dim) = header("dim")?;
    if dim != 2 && dim != 3 {
        return Err(err(ln, format!("dimension must be 2 or 3, got {dim}")));
    }
    let (_, num_nodes) = header("nodes")?;
    let mut coords = Vec::with_capacity(num_nodes * dim);
    for _ in 0..num_nodes {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(0, "unexpected end of file in node block".into()))?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad coordinate: {e}")))?;
        if row.len() != dim {
            return Err(err(ln, format!("expected {dim} coordinates, found {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(err(ln, "non-finite coordinate".into()));
        }
        coords.extend(row);
    }

    let (ln, l) = lines
        .next()
        .ok_or_else(|| err(0, "unexpected end of file, expected `elements`".into()))?;
    let mut it = l.split_whitespace();
    if it.next() != Some("elements") {
        return Err(err(ln, "expected `elements <count>`".into()));
    }
    let num_elements = it
        .next()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| err(ln, "`elements` needs a non-negative integer".into()))?;

    let mut conn = Vec::with_capacity(num_elements * (dim + 1));
    let mut bodies = Vec::with_capacity(num_elements);
    for e in 0..num_elements {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(0, "unexpected end of file in element block".into()))?;
        let row: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad index: {e}")))?;
        if row.len() != dim + 2 {
            return Err(err(
                ln,
                format!("element {e}: expected body id and {} node indices", dim + 1),
            ));
        }
        if let Some(&n) = row[1..].iter().find(|&&n| n >= num_nodes) {
            return Err(err(ln, format!("element {e}: node index {n} out of range")));
        }
        bodies.push(row[0]);
        conn.extend_from_slice(&row[1..]);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "unexpected content after element block".into()));
    }
    Mesh::new(dim, coords, conn, bodies)
}

pub fn write_mesh(mesh: &Mesh) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    let _ = writeln!(s, "dim {d}");
    let _ = writeln!(s, "nodes {}", mesh.num_nodes());
    for x in mesh.coords().chunks(d) {
        let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "elements {}", mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let _ = write!(s, "{}", mesh.element_body(e));
        for n in mesh.element(e) {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_mesh(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: &str = "dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 0 1 2\n";

    #[test]
    fn parses_unit_triangle() {
        let m = parse_mesh(TRI, Path::new("tri.mesh")).unwrap();
        assert_eq!(m.num_nodes(), 3);
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn inverted_tetrahedron_is_named() {
        let text = "dim 3\nnodes 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nelements 1\n7 0 2 1 3\n";
        match parse_mesh(text, Path::new("t.mesh")) {
            Err(Error::DegenerateElement { element, volume }) => {
                assert_eq!(element, 0);
                assert!(volume < 0.0);
            }
            other => panic!("expected degenerate element, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "dim 2\nnodes 3\n0 0\n1 x\n0 1\nelements 1\n0 0 1 2\n";
        match parse_mesh(text, Path::new("bad.mesh")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = "dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 0 1 5\n";
        match parse_mesh(text, Path::new("bad.mesh")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_mesh("dim 4\n", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let m = parse_mesh(TRI, Path::new("tri.mesh")).unwrap();
        let again = parse_mesh(&write_mesh(&m), Path::new("again")).unwrap();
        assert_eq!(m, again);
    }
}
