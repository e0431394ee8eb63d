//! Analytic distance oracles for the screened-Poisson gap.

use std::str::FromStr;

use crate::adf::{varadhan_limit_check, AdfParams, ScalarField, ScreenedPoisson, VaradhanRow};
use crate::contact::{tributary_measure, PenaltyWeighting};
use crate::error::{Error, Result};
use crate::mesh::{extract_boundary, generate, Mesh};
use crate::scenario::{builtin, Scenario};
use crate::solver::Solver;

pub const STRIP_LENGTH: f64 = 2.0;
pub const STRIP_WIDTH: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    /// `[0, 2] × [0, 0.2]`.
    Strip,
    /// Unit disk.
    Disk,
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strip" => Ok(Geometry::Strip),
            "disk" => Ok(Geometry::Disk),
            _ => Err(Error::config("geometry", format!("expected strip or disk, got `{s}`"))),
        }
    }
}

pub fn strip_mesh(h: f64) -> Result<Mesh> {
    generate::rectangle_h([0.0, 0.0], [STRIP_LENGTH, STRIP_WIDTH], h)
}

/// Gap field on the strip with φ = 1 on the `x = 0` edge only, which
/// emulates a half-space: the exact gap is `−x`.
pub fn strip_half_space(h: f64, l_c: f64) -> Result<(Mesh, ScalarField)> {
    let mesh = strip_mesh(h)?;
    let edge: Vec<usize> = (0..mesh.num_nodes()).filter(|&n| mesh.node(n)[0] == 0.0).collect();
    let mut sp = ScreenedPoisson::new(&mesh, 0, &edge)?;
    let params = AdfParams::new(l_c);
    let mut phi = vec![1.0; mesh.num_nodes()];
    sp.solve(&mesh, mesh.coords(), params.c_l(), &mut phi)?;
    Ok((mesh, ScalarField { phi, params }))
}

/// `max |g + x|` over nodes with `x ∈ [x0, x1]` on the half-space strip.
pub fn strip_exactness(h: f64, l_c: f64, x0: f64, x1: f64) -> Result<f64> {
    let (mesh, field) = strip_half_space(h, l_c)?;
    let g = field.nodal_gap();
    Ok((0..mesh.num_nodes())
        .filter(|&n| (x0..=x1).contains(&mesh.node(n)[0]))
        .map(|n| (g[n] + mesh.node(n)[0]).abs())
        .fold(0.0, f64::max))
}

/// Varadhan sweep with φ = 1 on the whole boundary; the error is measured
/// against the exact distance to the boundary at every node.
pub fn varadhan_sweep(geometry: Geometry, h: f64, l_cs: &[f64]) -> Result<Vec<VaradhanRow>> {
    let mesh = match geometry {
        Geometry::Strip => strip_mesh(h)?,
        Geometry::Disk => generate::disk([0.0, 0.0], 1.0, h)?,
    };
    let boundary = extract_boundary(&mesh);
    let dirichlet = &boundary.exterior_nodes[&0];
    match geometry {
        Geometry::Strip => varadhan_limit_check(
            &mesh,
            0,
            dirichlet,
            l_cs,
            |x| {
                x[0].min(STRIP_LENGTH - x[0])
                    .min(x[1])
                    .min(STRIP_WIDTH - x[1])
                    .max(0.0)
            },
            |_| true,
        ),
        Geometry::Disk => {
            varadhan_limit_check(&mesh, 0, dirichlet, l_cs, |x| (1.0 - x[0].hypot(x[1])).max(0.0), |_| true)
        }
    }
}

/// Plain-text table of a sweep.
pub fn format_table(rows: &[VaradhanRow]) -> String {
    let mut s = String::from("l_c          max_error     warning\n");
    for r in rows {
        s.push_str(&format!("{:<12.6} {:<13.6e} {}\n", r.l_c, r.max_error, if r.warning { "yes" } else { "" }));
    }
    s
}

/// Contact traction along the lower face of the upper patch-test block.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchReport {
    pub weighting: PenaltyWeighting,
    /// `(x, |f| / tributary length)` per interface node of the upper block, by `x`.
    pub tractions: Vec<(f64, f64)>,
    pub mean: f64,
    /// `(max − min) / mean` of the tractions.
    pub nonuniformity: f64,
    pub applied_pressure: f64,
}

/// Runs the built-in two-block patch test with the given weighting.
pub fn patch_test(weighting: PenaltyWeighting, overrides: &[String]) -> Result<PatchReport> {
    let mut ov = vec![format!(
        "contact.penalty_weighting={}",
        match weighting {
            PenaltyWeighting::None => "none",
            PenaltyWeighting::EdgeProjection => "edge_projection",
        }
    )];
    ov.extend_from_slice(overrides);
    let scenario = Scenario::parse(builtin::PATCH2D, &ov, std::path::Path::new("."))?.scenario;
    let upper = scenario.bodies.iter().position(|b| b.name == "upper").expect("patch body");
    let y_face = match &scenario.bodies[upper].generator {
        Some(crate::scenario::Generator::Rectangle { min, .. }) => min[1],
        _ => return Err(Error::config("body.upper", "expected a rectangle")),
    };
    let applied_pressure = -scenario.loads[0].traction[1];
    let (problem, params) = scenario.build()?;
    let mut solver = Solver::new(problem, params)?;
    let mut state = solver.initial_state();
    solver.run(&mut state, |_, _, _| Ok(()))?;

    let mesh = &solver.problem().mesh;
    let coords = solver.current_coords(&state.u);
    let forces = solver.incident_forces(&state)?;
    let mut tractions = Vec::new();
    for n in mesh.body_nodes(upper) {
        if (mesh.node(n)[1] - y_face).abs() > 1e-12 {
            continue;
        }
        let f: f64 = forces
            .iter()
            .filter(|(a, _)| a.node == n)
            .map(|(_, f)| f[0].hypot(f[1]))
            .sum();
        // Only the interface face counts towards the tributary length.
        let w = tributary_measure(mesh, &coords, &solver.problem().boundary, n, Some([0.0, 1.0, 0.0]))?;
        tractions.push((mesh.node(n)[0], f / w));
    }
    tractions.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mean = tractions.iter().map(|t| t.1).sum::<f64>() / tractions.len() as f64;
    let (lo, hi) = tractions
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), t| (lo.min(t.1), hi.max(t.1)));
    Ok(PatchReport {
        weighting,
        tractions,
        mean,
        nonuniformity: (hi - lo) / mean,
        applied_pressure,
    })
}
