//! Scenario files: sectioned `key = value` text (TOML) describing bodies,
//! boundary conditions, contact and solver settings.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adf::{GapNormalization, GapSign};
use crate::contact::{ContactParams, PenaltyWeighting};
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::{generate, load_mesh, Mesh};
use crate::solver::{select_box, traction_forces, BodySpec, DirichletBc, Problem, SolverParams};

/// Shipped scenario files.
pub mod builtin {
    pub const COMPRESSION2D: &str = include_str!("../scenarios/compression2d.toml");
    pub const COMPRESSION3D: &str = include_str!("../scenarios/compression3d.toml");
    pub const PATCH2D: &str = include_str!("../scenarios/patch2d.toml");
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub enabled: bool,
    pub kappa: f64,
    pub l_c: f64,
    pub sign: GapSign,
    pub gap_normalization: GapNormalization,
    pub penalty_weighting: PenaltyWeighting,
}

impl Default for ContactSection {
    fn default() -> Self {
        ContactSection {
            enabled: true,
            kappa: 1e6,
            l_c: 0.1,
            sign: GapSign::Plus,
            gap_normalization: GapNormalization::Sqrt,
            penalty_weighting: PenaltyWeighting::None,
        }
    }
}

impl ContactSection {
    pub fn params(&self) -> ContactParams {
        ContactParams {
            kappa: self.kappa,
            l_c: self.l_c,
            sign: self.sign,
            gap_normalization: self.gap_normalization,
            penalty_weighting: self.penalty_weighting,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write `step_*.vtk` every this many steps (0: never).
    pub snapshots: usize,
    /// Write `state_*.json` every this many steps (0: never).
    pub checkpoints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    /// Default element size for generated bodies.
    pub h: f64,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { h: 0.02 }
    }
}

/// Built-in geometry. Sizes default to `[mesh] h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
        h: Option<f64>,
    },
    /// Union of `[x0, y0, x1, y1]` rectangles.
    RectangleUnion { rects: Vec<[f64; 4]>, h: Option<f64> },
    Disk {
        center: [f64; 2],
        radius: f64,
        h: Option<f64>,
    },
    RegularPolygon {
        center: [f64; 2],
        radius: f64,
        sides: usize,
        /// Degrees.
        #[serde(default)]
        phase: f64,
        h: Option<f64>,
    },
    /// Star-shaped polygon with respect to its vertex centroid.
    Polygon { vertices: Vec<[f64; 2]>, h: Option<f64> },
    Block {
        min: [f64; 3],
        max: [f64; 3],
        h: Option<f64>,
    },
    /// Circular cylinder along `axis` (0, 1 or 2) starting at `base`.
    Cylinder {
        base: [f64; 3],
        radius: f64,
        length: f64,
        axis: usize,
        h: Option<f64>,
    },
    /// Upright cone frustum on `base`; `top_radius` keeps the tip non-degenerate.
    Cone {
        base: [f64; 3],
        radius: f64,
        top_radius: f64,
        height: f64,
        h: Option<f64>,
    },
    /// Upright circular sector prism: apex at `base`, opening `angle`
    /// degrees starting at `phase` degrees, extruded by `width`.
    Wedge {
        base: [f64; 3],
        radius: f64,
        angle: f64,
        #[serde(default)]
        phase: f64,
        width: f64,
        h: Option<f64>,
    },
}

fn layers(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::Rectangle { .. }
            | Generator::RectangleUnion { .. }
            | Generator::Disk { .. }
            | Generator::RegularPolygon { .. }
            | Generator::Polygon { .. } => 2,
            _ => 3,
        }
    }

    pub fn build(&self, default_h: f64) -> Result<Mesh> {
        let hh = |h: &Option<f64>| h.unwrap_or(default_h);
        match self {
            Generator::Rectangle { min, max, h } => generate::rectangle_h(*min, *max, hh(h)),
            Generator::RectangleUnion { rects, h } => {
                let r: Vec<_> = rects.iter().map(|r| ([r[0], r[1]], [r[2], r[3]])).collect();
                generate::rectangle_union(&r, hh(h))
            }
            Generator::Disk { center, radius, h } => generate::disk(*center, *radius, hh(h)),
            Generator::RegularPolygon {
                center,
                radius,
                sides,
                phase,
                h,
            } => generate::regular_polygon(*center, *radius, *sides, phase.to_radians(), hh(h)),
            Generator::Polygon { vertices, h } => generate::star_polygon(vertices, hh(h)),
            Generator::Block { min, max, h } => generate::block_h(*min, *max, hh(h)),
            Generator::Cylinder {
                base,
                radius,
                length,
                axis,
                h,
            } => {
                let h = hh(h);
                let disk = generate::disk([0.0, 0.0], *radius, h)?;
                let m = generate::extrude(&disk, 0.0, *length, layers(*length, h), [0.0, 0.0], |_| 1.0)?;
                if *axis > 2 {
                    return Err(Error::config("generator.axis", "must be 0, 1 or 2"));
                }
                // Extrusion runs along z; a cyclic shift of (axis + 1) moves it to `axis`.
                generate::place(&m, (*axis + 1) % 3, base)
            }
            Generator::Cone {
                base,
                radius,
                top_radius,
                height,
                h,
            } => {
                let h = hh(h);
                if !(*top_radius > 0.0 && top_radius < radius) {
                    return Err(Error::config("generator.top_radius", "must lie in (0, radius)"));
                }
                let disk = generate::disk([base[0], base[1]], *radius, h)?;
                let s = top_radius / radius;
                generate::extrude(&disk, base[2], *height, layers(*height, h), [base[0], base[1]], |f| {
                    1.0 - (1.0 - s) * f
                })
            }
            Generator::Wedge {
                base,
                radius,
                angle,
                phase,
                width,
                h,
            } => {
                let h = hh(h);
                let sec = generate::sector(
                    [base[0], base[1]],
                    *radius,
                    phase.to_radians(),
                    angle * PI / 180.0,
                    h,
                )?;
                generate::extrude(&sec, base[2], *width, layers(*width, h), [0.0, 0.0], |_| 1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySection {
    pub name: String,
    #[serde(rename = "E")]
    pub young: f64,
    pub nu: f64,
    #[serde(default)]
    pub rigid: bool,
    #[serde(default)]
    pub damped: bool,
    /// Mesh file (relative paths resolve against the scenario file).
    pub mesh: Option<PathBuf>,
    pub generator: Option<Generator>,
}

/// Inclusive box on reference coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Select {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default = "default_select_tol")]
    pub tol: f64,
}

fn default_select_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    pub name: String,
    pub body: String,
    /// Whole body when absent.
    pub select: Option<Select>,
    pub components: Vec<usize>,
    /// Displacement per component at the end of the run (zero when absent).
    pub displacement: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    pub name: String,
    pub body: String,
    pub select: Option<Select>,
    /// Dead traction per unit reference face measure at the end of the run.
    pub traction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub contact: ContactSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(rename = "body")]
    pub bodies: Vec<BodySection>,
    #[serde(rename = "bc", default)]
    pub bcs: Vec<BcSection>,
    #[serde(rename = "load", default)]
    pub loads: Vec<LoadSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn toml_err(e: toml::de::Error) -> Error {
    let key = e
        .message()
        .split('`')
        .nth(1)
        .unwrap_or("scenario")
        .to_string();
    Error::config(key, e.to_string().trim().replace('\n', " "))
}

/// Applies `path=value` to a TOML table. `path` is dotted; array elements
/// are addressed by index or by their `name` key. `value` is parsed as a
/// TOML value, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let (path, raw) = (path.trim(), raw.trim());
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = &mut *table;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if last {
            cur.insert((*part).to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            toml::Value::Array(items) => {
                // Consume the next component as the element selector.
                let sel = parts[i + 1];
                let idx = match sel.parse::<usize>() {
                    Ok(k) => k,
                    Err(_) => items
                        .iter()
                        .position(|it| it.get("name").and_then(|n| n.as_str()) == Some(sel))
                        .ok_or_else(|| Error::config(path, format!("no element named `{sel}`")))?,
                };
                let rest = parts[i + 2..].join(".");
                let item = items
                    .get_mut(idx)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| Error::config(path, format!("index {idx} out of range")))?;
                if rest.is_empty() {
                    return Err(Error::config(path, "cannot replace a whole array element"));
                }
                return apply_override(item, &format!("{rest}={raw}"));
            }
            _ => return Err(Error::config(path, format!("`{part}` is not a section"))),
        };
    }
    Ok(())
}

/// Parsed, overridden and echoed scenario text.
pub struct Parsed {
    pub scenario: Scenario,
    /// Effective configuration after overrides, as TOML.
    pub effective: String,
}

impl Scenario {
    /// Parses scenario text, applies overrides and validates.
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Parsed> {
        let mut table: toml::Table = toml::from_str(text).map_err(toml_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let effective = toml::to_string(&table).map_err(|e| Error::config("scenario", e.to_string()))?;
        let mut scenario: Scenario = toml::from_str(&effective).map_err(toml_err)?;
        scenario.base_dir = base_dir.to_path_buf();
        scenario.validate()?;
        Ok(Parsed { scenario, effective })
    }

    pub fn from_str(text: &str) -> Result<Scenario> {
        Ok(Self::parse(text, &[], Path::new("."))?.scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.contact.params().validate()?;
        if !(self.mesh.h > 0.0) {
            return Err(Error::config("mesh.h", "must be positive"));
        }
        if self.bodies.is_empty() {
            return Err(Error::config("body", "at least one body is required"));
        }
        let mut dims = Vec::new();
        for (i, b) in self.bodies.iter().enumerate() {
            let key = |k: &str| format!("body.{}.{k}", b.name);
            if self.bodies[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::config(key("name"), "duplicate body name"));
            }
            MaterialParams::new(b.young, b.nu).map_err(|e| match e {
                Error::Config { key: k, msg } => Error::config(key(&k), msg),
                other => other,
            })?;
            match (&b.mesh, &b.generator) {
                (Some(p), None) => {
                    let p = self.base_dir.join(p);
                    if !p.is_file() {
                        return Err(Error::config(key("mesh"), format!("file {} not found", p.display())));
                    }
                }
                (None, Some(g)) => dims.push(g.dim()),
                _ => return Err(Error::config(key("mesh"), "give exactly one of `mesh` or `generator`")),
            }
        }
        dims.dedup();
        if dims.len() > 1 {
            return Err(Error::config("body", "generated bodies mix 2D and 3D"));
        }
        let names: Vec<&str> = self.bodies.iter().map(|b| b.name.as_str()).collect();
        for bc in &self.bcs {
            let key = |k: &str| format!("bc.{}.{k}", bc.name);
            if !names.contains(&bc.body.as_str()) {
                return Err(Error::config(key("body"), format!("unknown body `{}`", bc.body)));
            }
            if bc.components.is_empty() {
                return Err(Error::config(key("components"), "empty"));
            }
            if let Some(d) = &bc.displacement {
                if d.len() != bc.components.len() {
                    return Err(Error::config(key("displacement"), "one value per component"));
                }
            }
        }
        for l in &self.loads {
            if !names.contains(&l.body.as_str()) {
                return Err(Error::config(format!("load.{}.body", l.name), format!("unknown body `{}`", l.body)));
            }
        }
        Ok(())
    }

    /// Meshes every body and merges them; body ids follow declaration order.
    pub fn build_mesh(&self) -> Result<Mesh> {
        let parts = self
            .bodies
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let m = match (&b.mesh, &b.generator) {
                    (Some(p), _) => load_mesh(self.base_dir.join(p))?,
                    (None, Some(g)) => g.build(self.mesh.h)?,
                    (None, None) => unreachable!("validated"),
                };
                Ok(m.with_body(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Mesh::merge(&parts)
    }

    fn body_index(&self, name: &str) -> usize {
        self.bodies.iter().position(|b| b.name == name).expect("validated")
    }

    fn selected(&self, mesh: &Mesh, body: usize, select: &Option<Select>) -> Vec<usize> {
        let nodes = match select {
            Some(s) => select_box(mesh, &s.min, &s.max, s.tol),
            None => (0..mesh.num_nodes()).collect(),
        };
        nodes.into_iter().filter(|&n| mesh.node_body(n) == body).collect()
    }

    pub fn build(&self) -> Result<(Problem, SolverParams)> {
        let mesh = self.build_mesh()?;
        let d = mesh.dim();
        let bodies = self
            .bodies
            .iter()
            .map(|b| {
                Ok(BodySpec {
                    name: b.name.clone(),
                    material: MaterialParams::new(b.young, b.nu)?,
                    rigid: b.rigid,
                    damped: b.damped,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bcs = Vec::new();
        for bc in &self.bcs {
            let body = self.body_index(&bc.body);
            let nodes = self.selected(&mesh, body, &bc.select);
            if nodes.is_empty() {
                return Err(Error::config(format!("bc.{}.select", bc.name), "selects no nodes"));
            }
            if let Some(&c) = bc.components.iter().find(|&&c| c >= d) {
                return Err(Error::config(format!("bc.{}.components", bc.name), format!("{c} out of range")));
            }
            let disp = bc.displacement.clone().unwrap_or_else(|| vec![0.0; bc.components.len()]);
            bcs.push(DirichletBc {
                name: bc.name.clone(),
                nodes,
                components: bc.components.iter().copied().zip(disp).collect(),
            });
        }
        let boundary = crate::mesh::extract_boundary(&mesh);
        let mut f_ext = vec![0.0; mesh.num_nodes() * d];
        for l in &self.loads {
            if l.traction.len() != d {
                return Err(Error::config(format!("load.{}.traction", l.name), format!("needs {d} components")));
            }
            let body = self.body_index(&l.body);
            let mut mask = vec![false; mesh.num_nodes()];
            let nodes = self.selected(&mesh, body, &l.select);
            if nodes.is_empty() {
                return Err(Error::config(format!("load.{}.select", l.name), "selects no nodes"));
            }
            for n in nodes {
                mask[n] = true;
            }
            let f = traction_forces(&mesh, &boundary, &l.traction, |n| mask[n]);
            f_ext.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
        let mut problem = Problem::new(mesh, bodies, bcs, Some(f_ext), self.contact.params())?;
        problem.contact_enabled = self.contact.enabled;
        Ok((problem, self.solver.clone()))
    }
}

/// Reads and parses a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>, overrides: &[String]) -> Result<Parsed> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::parse(&text, overrides, base)
}
