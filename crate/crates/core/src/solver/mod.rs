//! Staggered quasi-static loop: per load step solve φ on the current
//! configuration, detect targets, Newton-iterate the displacements with
//! targets and φ frozen, then verify the targets and re-iterate if they moved.

mod output;
mod problem;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use output::{write_log_header, write_log_row, RunSummary};
pub use problem::{select_box, traction_forces, BodySpec, DirichletBc, Problem};

use crate::adf::{eval_gap, AdfSolver, ScalarField};
use crate::contact::{contact_element, weighted_penalty, PenaltyWeighting, TargetAssignment};
use crate::detection::{build_grid, detect, DetectionReport};
use crate::error::{Error, Result};
use crate::fem::{norm, DofMap, LinearSolver, SimplexGeometry, SparseSystem, SparsityPattern};
use crate::material::element_residual_stiffness;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Absolute tolerance as a fraction of the reference force.
    pub tol_abs: f64,
    /// Tolerance relative to the first residual of the Newton solve.
    pub tol_rel: f64,
    pub max_iterations: usize,
    /// Viscous coefficient `c`; nodal force `c m (u − u_prev) / Δt` on damped bodies.
    pub damping: f64,
    pub max_target_retries: usize,
    /// Consecutive accepted steps before `dt` grows.
    pub growth_after: usize,
    pub growth_factor: f64,
    /// Re-solve φ before every Newton iteration instead of once per step.
    pub phi_per_iteration: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            dt: 0.05,
            dt_min: 1e-6,
            dt_max: 0.05,
            t_end: 1.0,
            tol_abs: 1e-8,
            tol_rel: 1e-10,
            max_iterations: 25,
            damping: 0.0,
            max_target_retries: 5,
            growth_after: 5,
            growth_factor: 1.2,
            phi_per_iteration: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |k: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(k, format!("must be positive, got {v}")))
            }
        };
        pos("dt", self.dt)?;
        pos("dt_min", self.dt_min)?;
        pos("dt_max", self.dt_max)?;
        pos("t_end", self.t_end)?;
        pos("tol_abs", self.tol_abs)?;
        pos("tol_rel", self.tol_rel)?;
        if self.dt_min > self.dt || self.dt > self.dt_max {
            return Err(Error::config("dt", "need dt_min <= dt <= dt_max"));
        }
        if self.damping < 0.0 {
            return Err(Error::config("damping", "must be non-negative"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be at least 1"));
        }
        if self.growth_factor < 1.0 {
            return Err(Error::config("growth_factor", "must be at least 1"));
        }
        Ok(())
    }
}

/// Everything needed to resume a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    /// Pseudo-time; the load factor is `time / t_end`.
    pub time: f64,
    pub dt: f64,
    pub step: usize,
    /// Consecutive accepted steps since the last change of `dt`.
    pub successes: usize,
    pub u: Vec<f64>,
    pub detection: DetectionReport,
    pub v_max_history: Vec<f64>,
    pub total_iterations: usize,
    pub rebuilds: usize,
}

impl SolverState {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub converged: bool,
    /// Newton iterations of the accepted attempt, target re-solves included.
    pub iterations: usize,
    /// Residual norms of the final Newton solve.
    pub residual_history: Vec<f64>,
    pub v_max: f64,
    /// Summed residual over each boundary condition's node set.
    pub reactions: Vec<(String, [f64; 3])>,
    pub retries: usize,
    pub cuts: usize,
    pub rebuilt: bool,
    pub assignments: usize,
    /// Largest `‖Σ_nodes r‖ / Σ_nodes ‖r‖` over the active contact elements.
    pub contact_imbalance: f64,
}

/// Accepted: count the success and grow `dt` after enough of them. Rejected:
/// halve `dt`, failing below `dt_min`. Returns the new `(dt, successes)`.
pub fn step_control(dt: f64, successes: usize, accepted: bool, p: &SolverParams) -> Result<(f64, usize)> {
    if accepted {
        let s = successes + 1;
        if s >= p.growth_after {
            Ok(((dt * p.growth_factor).min(p.dt_max), 0))
        } else {
            Ok((dt, s))
        }
    } else {
        let half = 0.5 * dt;
        if half < p.dt_min * (1.0 - 1e-12) {
            Err(Error::StepUnderflow {
                time: f64::NAN,
                dt: half,
                cause: "step size below dt_min".into(),
            })
        } else {
            Ok((half, 0))
        }
    }
}

/// Step-length halvings per Newton iteration.
const MAX_HALVINGS: usize = 8;

/// Converged Newton iterate.
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Parameters held fixed during one Newton solve.
#[derive(Clone, Debug)]
pub struct Frozen {
    pub assignments: Vec<TargetAssignment>,
    pub field: Option<ScalarField>,
}

struct Evaluation {
    /// `F_int + F_c + F_damp − λ F_ext` over all dofs.
    r: Vec<f64>,
    /// `‖F_int + F_c‖` over all dofs.
    f_int: f64,
    system: Option<SparseSystem>,
    v_max: f64,
    imbalance: f64,
}

pub struct Solver {
    problem: Problem,
    params: SolverParams,
    geometry: Vec<Option<SimplexGeometry>>,
    lumped: Vec<f64>,
    adf: Option<AdfSolver>,
    linear: LinearSolver,
    dofs: DofMap,
    pattern_cache: Option<(BTreeSet<(usize, usize)>, Arc<SparsityPattern>)>,
    last_field: Option<ScalarField>,
}

impl Solver {
    pub fn new(problem: Problem, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let mesh = &problem.mesh;
        let d = mesh.dim();
        let geometry = (0..mesh.num_elements())
            .map(|e| {
                if problem.bodies[mesh.element_body(e)].rigid {
                    return Ok(None);
                }
                let x: Vec<f64> = mesh
                    .element(e)
                    .iter()
                    .flat_map(|&n| mesh.node(n).iter().copied())
                    .collect();
                SimplexGeometry::new(&x, d)
                    .map(Some)
                    .map_err(|_| Error::DegenerateElement {
                        element: e,
                        volume: mesh.signed_volume(e, mesh.coords()),
                    })
            })
            .collect::<Result<_>>()?;
        let adf = if problem.contact_enabled {
            Some(AdfSolver::new(mesh, &problem.boundary)?)
        } else {
            None
        };
        let fixed = problem.prescribed(0.0);
        let dofs = DofMap::new(mesh.num_nodes(), d, |n, c| fixed[n * d + c].is_some());
        Ok(Solver {
            dofs,
            lumped: mesh.lumped_volumes(),
            geometry,
            adf,
            linear: LinearSolver::new().allow_indefinite(true),
            pattern_cache: None,
            last_field: None,
            problem,
            params,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// φ of the most recent step.
    pub fn last_field(&self) -> Option<&ScalarField> {
        self.last_field.as_ref()
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState {
            time: 0.0,
            dt: self.params.dt,
            step: 0,
            successes: 0,
            u: vec![0.0; self.problem.num_dofs()],
            detection: DetectionReport::default(),
            v_max_history: Vec::new(),
            total_iterations: 0,
            rebuilds: 0,
        }
    }

    pub fn finished(&self, state: &SolverState) -> bool {
        state.time >= self.params.t_end * (1.0 - 1e-12)
    }

    pub fn current_coords(&self, u: &[f64]) -> Vec<f64> {
        self.problem
            .mesh
            .coords()
            .iter()
            .zip(u)
            .map(|(x, u)| x + u)
            .collect()
    }

    /// φ for every body on the configuration `u`.
    pub fn solve_field(&mut self, u: &[f64]) -> Result<Option<ScalarField>> {
        let coords = self.current_coords(u);
        let adf_params = self.problem.contact.adf();
        match self.adf.as_mut() {
            Some(adf) => Ok(Some(adf.solve(&self.problem.mesh, &coords, adf_params)?)),
            None => Ok(None),
        }
    }

    /// Detection on `u` with frozen `field`, weights attached.
    pub fn detect_targets(
        &self,
        u: &[f64],
        field: &ScalarField,
        previous: &DetectionReport,
    ) -> Result<DetectionReport> {
        let mesh = &self.problem.mesh;
        let coords = self.current_coords(u);
        let grid = build_grid(mesh, &coords, &self.problem.boundary);
        let mut report = detect(mesh, &coords, &grid, Some(field), Some(previous))?;
        // Rigid bodies only act as targets.
        let before = report.assignments.len();
        report
            .assignments
            .retain(|a| !self.problem.bodies[mesh.node_body(a.node)].rigid);
        if report.assignments.len() != before {
            let (now, prev) = (report.pairs(), previous.pairs());
            report.changed = now != prev;
            report.released = prev.difference(&now).copied().collect();
        }
        if self.problem.contact.penalty_weighting != PenaltyWeighting::None {
            for a in &mut report.assignments {
                let normal = eval_gap(field, mesh, &coords, a.element, &a.xi[..mesh.dim()])?.normal();
                a.weight = weighted_penalty(
                    mesh,
                    &coords,
                    &self.problem.boundary,
                    a.node,
                    Some(normal),
                    &self.problem.contact,
                )? / self.problem.contact.kappa;
            }
        }
        Ok(report)
    }

    /// Contact force on the incident node of every assignment in `state`,
    /// with the φ of the last step.
    pub fn incident_forces(&self, state: &SolverState) -> Result<Vec<(TargetAssignment, [f64; 3])>> {
        let Some(field) = &self.last_field else {
            return Ok(Vec::new());
        };
        let mesh = &self.problem.mesh;
        let d = mesh.dim();
        let coords = self.current_coords(&state.u);
        state
            .detection
            .assignments
            .iter()
            .map(|a| {
                let phi: Vec<f64> = mesh.element(a.element).iter().map(|&n| field.phi[n]).collect();
                let kappa = self.problem.contact.kappa * a.weight;
                let resp = contact_element(&a.x_c(mesh, &coords), &phi, field.params, kappa, d)?;
                Ok((*a, resp.incident_force(d)))
            })
            .collect()
    }

    /// Total contact force on every dof (`−Σ` of the contact residuals) for
    /// the assignments in `state`, with the φ of the last step.
    pub fn contact_forces(&self, state: &SolverState) -> Result<Vec<f64>> {
        let mut f = vec![0.0; state.u.len()];
        let Some(field) = &self.last_field else {
            return Ok(f);
        };
        let mesh = &self.problem.mesh;
        let d = mesh.dim();
        let coords = self.current_coords(&state.u);
        for a in &state.detection.assignments {
            let phi: Vec<f64> = mesh.element(a.element).iter().map(|&n| field.phi[n]).collect();
            let kappa = self.problem.contact.kappa * a.weight;
            let resp = contact_element(&a.x_c(mesh, &coords), &phi, field.params, kappa, d)?;
            for (k, n) in a.nodes(mesh).into_iter().enumerate() {
                for c in 0..d {
                    f[n * d + c] -= resp.residual[k * d + c];
                }
            }
        }
        Ok(f)
    }

    fn target_bodies(&self, r: &DetectionReport) -> BTreeSet<(usize, usize)> {
        let mesh = &self.problem.mesh;
        r.assignments.iter().map(|a| (a.node, mesh.element_body(a.element))).collect()
    }

    /// Sparsity of the elastic elements plus the given contact elements,
    /// rebuilt only when the pair set changes.
    fn pattern_for(&mut self, assignments: &[TargetAssignment]) -> Arc<SparsityPattern> {
        let pairs: BTreeSet<_> = assignments.iter().map(|a| (a.node, a.element)).collect();
        if let Some((p, pat)) = &self.pattern_cache {
            if *p == pairs {
                return pat.clone();
            }
        }
        let mesh = &self.problem.mesh;
        let dofs = &self.dofs;
        let mut cliques: Vec<Vec<usize>> = (0..mesh.num_elements())
            .filter(|&e| self.geometry[e].is_some())
            .map(|e| dofs.clique(mesh.element(e)))
            .collect();
        cliques.extend(assignments.iter().map(|a| dofs.clique(&a.nodes(mesh))));
        let pat = Arc::new(SparsityPattern::from_cliques(dofs.num_free(), &cliques));
        self.pattern_cache = Some((pairs, pat.clone()));
        pat
    }

    fn evaluate(
        &self,
        u: &[f64],
        u_prev: &[f64],
        dt: f64,
        lambda: f64,
        frozen: &Frozen,
        pattern: Option<&Arc<SparsityPattern>>,
        consistent: bool,
    ) -> Result<Evaluation> {
        let mesh = &self.problem.mesh;
        let d = mesh.dim();
        let mut r = vec![0.0; u.len()];
        let dofs = &self.dofs;
        let mut system = pattern.map(|p| SparseSystem::new(p.clone()));
        let mut ue = vec![0.0; (d + 1) * d];
        for e in 0..mesh.num_elements() {
            let Some(geo) = &self.geometry[e] else { continue };
            let nodes = mesh.element(e);
            for (k, &n) in nodes.iter().enumerate() {
                ue[k * d..(k + 1) * d].copy_from_slice(&u[n * d..(n + 1) * d]);
            }
            let material = &self.problem.bodies[mesh.element_body(e)].material;
            let resp = element_residual_stiffness(geo, &ue, material).map_err(|err| match err {
                Error::InvertedElement { det, .. } => Error::InvertedElement { element: e, det },
                other => other,
            })?;
            for (k, &n) in nodes.iter().enumerate() {
                for a in 0..d {
                    r[n * d + a] += resp.residual[k * d + a];
                }
            }
            if let Some(sys) = system.as_mut() {
                sys.add_element(&dofs.element_dofs(nodes), &resp.stiffness, &[], None)?;
            }
        }

        let mut v_max: f64 = 0.0;
        let mut imbalance: f64 = 0.0;
        if let Some(field) = &frozen.field {
            let coords = self.current_coords(u);
            let adf = field.params;
            for a in &frozen.assignments {
                let nodes = a.nodes(mesh);
                let xc = a.x_c(mesh, &coords);
                let phi: Vec<f64> = mesh.element(a.element).iter().map(|&n| field.phi[n]).collect();
                let kappa = self.problem.contact.kappa * a.weight;
                let resp = contact_element(&xc, &phi, adf, kappa, d).map_err(|err| match err {
                    Error::NonPositivePhi { value, .. } => Error::NonPositivePhi { element: a.element, value },
                    other => other,
                })?;
                v_max = v_max.max(-resp.g.min(0.0));
                let mut sum = [0.0; 3];
                let mut total = 0.0;
                for (k, &n) in nodes.iter().enumerate() {
                    let mut mag = 0.0;
                    for c in 0..d {
                        let v = resp.residual[k * d + c];
                        r[n * d + c] += v;
                        sum[c] += v;
                        mag += v * v;
                    }
                    total += mag.sqrt();
                }
                if total > 0.0 {
                    imbalance = imbalance.max(norm(&sum) / total);
                }
                if let Some(sys) = system.as_mut() {
                    if consistent || resp.g >= 0.0 {
                        sys.add_element(&dofs.element_dofs(&nodes), &resp.stiffness, &[], None)?;
                    } else {
                        // Positive semi-definite part `−2κ g ∇g ⊗ ∇g`, using
                        // `r = −κ g² ∇g`.
                        let c = -2.0 / (kappa * resp.g.powi(3));
                        let k: Vec<f64> = resp
                            .residual
                            .iter()
                            .flat_map(|p| resp.residual.iter().map(move |q| c * p * q))
                            .collect();
                        sys.add_element(&dofs.element_dofs(&nodes), &k, &[], None)?;
                    }
                }
            }
        }
        let f_int = norm(&r);

        if self.params.damping > 0.0 {
            let c = self.params.damping / dt;
            for n in 0..mesh.num_nodes() {
                if !self.problem.bodies[mesh.node_body(n)].damped {
                    continue;
                }
                let cm = c * self.lumped[n];
                for a in 0..d {
                    let i = n * d + a;
                    let Some(k) = dofs.dof(n, a) else { continue };
                    r[i] += cm * (u[i] - u_prev[i]);
                    if let Some(sys) = system.as_mut() {
                        sys.add(k, k, cm)?;
                    }
                }
            }
        }
        for (ri, f) in r.iter_mut().zip(&self.problem.f_ext) {
            *ri -= lambda * f;
        }
        if let Some(sys) = system.as_mut() {
            for (k, &g) in dofs.free_to_global().iter().enumerate() {
                sys.rhs[k] = -r[g];
            }
        }
        Ok(Evaluation {
            r,
            f_int,
            system,
            v_max,
            imbalance,
        })
    }

    fn free_norm(r: &[f64], dofs: &DofMap) -> f64 {
        norm(&dofs.free_to_global().iter().map(|&g| r[g]).collect::<Vec<_>>())
    }

    /// Newton iteration on the free displacements with `frozen` targets and φ.
    /// `u0` must already carry the prescribed values for `lambda`.
    pub fn newton_solve(
        &mut self,
        u0: Vec<f64>,
        u_prev: &[f64],
        dt: f64,
        lambda: f64,
        frozen: &mut Frozen,
    ) -> Result<NewtonOutcome> {
        let pattern = self.pattern_for(&frozen.assignments);
        let free = self.dofs.free_to_global();
        let mut u = u0;
        let mut eval = self.evaluate(&u, u_prev, dt, lambda, frozen, Some(&pattern), true)?;
        let r0 = Self::free_norm(&eval.r, &self.dofs);
        let f_ref = norm(&self.problem.f_ext) * lambda.abs();
        let f_ref = f_ref.max(eval.f_int);
        let (tol_abs, tol_rel) = (self.params.tol_abs, self.params.tol_rel);
        let converged = move |r: f64| r == 0.0 || r <= tol_abs * f_ref || r <= tol_rel * r0;
        let mut history = vec![r0];
        if converged(r0) {
            return Ok(NewtonOutcome {
                u,
                iterations: 0,
                residual_history: history,
            });
        }
        let mut growth = 0;
        let mut consistent = true;
        for it in 1..=self.params.max_iterations {
            let sys = eval.system.take().expect("assembled");
            let dx = self.linear.solve(&sys)?;
            if self.params.phi_per_iteration && frozen.field.is_some() {
                frozen.field = self.solve_field(&u)?;
            }
            // Back off when the full update would invert an element, then
            // while the residual grows (keeping the smallest one seen).
            let r_last = *history.last().expect("non-empty");
            let mut alpha = 1.0;
            let mut halvings = 0;
            let mut best: Option<(f64, Vec<f64>, Evaluation)> = None;
            loop {
                let mut trial = u.clone();
                for (k, &g) in free.iter().enumerate() {
                    trial[g] += alpha * dx[k];
                }
                match self.evaluate(&trial, u_prev, dt, lambda, frozen, Some(&pattern), consistent) {
                    Ok(e) => {
                        let r = Self::free_norm(&e.r, &self.dofs);
                        let better = best.as_ref().is_none_or(|b| r < b.0);
                        if better {
                            best = Some((r, trial, e));
                        }
                        if r <= r_last || !better || halvings >= MAX_HALVINGS {
                            break;
                        }
                    }
                    Err(
                        err @ (Error::InvertedElement { .. }
                        | Error::NonPositivePhi { .. }
                        | Error::DegenerateSimplex { .. }),
                    ) => {
                        if best.is_some() {
                            break;
                        }
                        if halvings >= MAX_HALVINGS {
                            return Err(err);
                        }
                    }
                    Err(err) => return Err(err),
                }
                halvings += 1;
                alpha *= 0.5;
            }
            let (r, trial, e) = best.expect("at least one evaluation");
            // A short step means the consistent tangent is a poor model here
            // (indefinite curvature of the gap); take the next step with the
            // semi-definite contact tangent, and return to the consistent one
            // after a full step.
            let was = consistent;
            consistent = alpha >= 0.25 && (consistent || alpha == 1.0);
            if was != consistent {
                log::trace!("newton {it}: consistent contact tangent {consistent}");
            }
            u = trial;
            eval = e;
            log::trace!("newton {it}: |r| = {r:e}, alpha = {alpha}");
            if !r.is_finite() {
                return Err(Error::Diverged { iterations: it, residual: r });
            }
            growth = if r > *history.last().expect("non-empty") { growth + 1 } else { 0 };
            history.push(r);
            if converged(r) {
                return Ok(NewtonOutcome {
                    u,
                    iterations: it,
                    residual_history: history,
                });
            }
            if growth >= 3 {
                return Err(Error::Diverged { iterations: it, residual: r });
            }
        }
        Err(Error::MaxIterations {
            iterations: self.params.max_iterations,
            residual: *history.last().expect("non-empty"),
        })
    }

    fn attempt(&mut self, state: &SolverState, dt: f64) -> Result<(SolverState, StepResult)> {
        let t_end = self.params.t_end;
        let mut time = state.time + dt;
        if (t_end - time).abs() <= 1e-12 * t_end {
            time = t_end;
        }
        let lambda = time / t_end;
        let d = self.problem.dim();
        let u_prev = &state.u;

        let field = self.solve_field(u_prev)?;
        if let Some(f) = &field {
            let bad = f.out_of_bounds(1e-9);
            if let Some(&n) = bad.first() {
                log::warn!("phi = {:e} at node {n} outside (0, 1]", f.phi[n]);
            }
        }
        let mut report = match &field {
            Some(f) => self.detect_targets(u_prev, f, &state.detection)?,
            None => DetectionReport::default(),
        };
        let rebuilt = report.changed;
        let mut frozen = Frozen {
            assignments: report.assignments.clone(),
            field,
        };

        let mut u0 = u_prev.clone();
        for (i, p) in self.problem.prescribed(lambda).into_iter().enumerate() {
            if let Some(v) = p {
                u0[i] = v;
            }
        }
        let mut iterations = 0;
        let mut retries = 0;
        let mut seen: Vec<BTreeSet<(usize, usize)>> = Vec::new();
        let outcome = loop {
            let out = self.newton_solve(u0, u_prev, dt, lambda, &mut frozen)?;
            iterations += out.iterations;
            let Some(f) = &frozen.field else { break out };
            let check = self.detect_targets(&out.u, f, &report)?;
            if !check.changed {
                break out;
            }
            // φ is continuous inside a body, so a node that only moved to a
            // neighbouring element of the same body keeps a consistent gap;
            // the new element is adopted from the next step on. Re-solving
            // here lets a node on a crease of the gap alternate forever.
            if self.target_bodies(&check) == self.target_bodies(&report) {
                report = check;
                break out;
            }
            // Same livelock across bodies: a repeated target set ends the re-solves.
            let pairs = check.pairs();
            if seen.contains(&pairs) {
                log::debug!("target set repeats after {retries} re-solves; accepting");
                break out;
            }
            seen.push(report.pairs());
            retries += 1;
            if retries > self.params.max_target_retries {
                return Err(Error::TargetsUnsettled { retries: retries - 1 });
            }
            if log::log_enabled!(log::Level::Debug) {
                let (a, b) = (report.pairs(), check.pairs());
                log::debug!(
                    "targets changed after convergence: -{:?} +{:?}",
                    a.difference(&b).collect::<Vec<_>>(),
                    b.difference(&a).collect::<Vec<_>>()
                );
            }
            frozen.assignments = check.assignments.clone();
            report = check;
            u0 = out.u;
        };

        let eval = self.evaluate(&outcome.u, u_prev, dt, lambda, &frozen, None, true)?;
        let reactions = self
            .problem
            .bcs
            .iter()
            .map(|bc| {
                let mut s = [0.0; 3];
                for &n in &bc.nodes {
                    for a in 0..d {
                        s[a] += eval.r[n * d + a];
                    }
                }
                (bc.name.clone(), s)
            })
            .collect();

        // Report changes against the previous step, not the last retry.
        let prev_pairs = state.detection.pairs();
        let now_pairs = report.pairs();
        report.released = prev_pairs.difference(&now_pairs).copied().collect();
        report.changed = prev_pairs != now_pairs;

        let mut next = state.clone();
        next.time = time;
        next.step += 1;
        next.u = outcome.u;
        next.v_max_history.push(eval.v_max);
        next.total_iterations += iterations;
        next.rebuilds += usize::from(rebuilt) + retries;
        let result = StepResult {
            step: next.step,
            time,
            dt,
            converged: true,
            iterations,
            residual_history: outcome.residual_history,
            v_max: eval.v_max,
            reactions,
            retries,
            cuts: 0,
            rebuilt: rebuilt || retries > 0,
            assignments: report.assignments.len(),
            contact_imbalance: eval.imbalance,
        };
        next.detection = report;
        self.last_field = frozen.field;
        Ok((next, result))
    }

    /// Advances one accepted step, cutting `dt` on failure.
    pub fn step(&mut self, state: &mut SolverState) -> Result<StepResult> {
        let mut dt = state.dt;
        let mut successes = state.successes;
        let mut cuts = 0;
        loop {
            let dt_use = dt.min(self.params.t_end - state.time);
            match self.attempt(state, dt_use) {
                Ok((mut next, mut result)) => {
                    let (ndt, ns) = step_control(dt, successes, true, &self.params)?;
                    next.dt = ndt;
                    next.successes = ns;
                    result.cuts = cuts;
                    *state = next;
                    return Ok(result);
                }
                Err(err) => {
                    log::warn!("step at t = {} with dt = {dt:e} failed: {err}", state.time);
                    let (ndt, ns) = step_control(dt, successes, false, &self.params).map_err(|_| {
                        Error::StepUnderflow {
                            time: state.time,
                            dt: 0.5 * dt,
                            cause: err.to_string(),
                        }
                    })?;
                    dt = ndt;
                    successes = ns;
                    cuts += 1;
                }
            }
        }
    }

    /// Runs to `t_end`, calling `observer` after every accepted step. On
    /// failure `state` holds the last accepted step.
    pub fn run(
        &mut self,
        state: &mut SolverState,
        mut observer: impl FnMut(&Solver, &SolverState, &StepResult) -> Result<()>,
    ) -> Result<Vec<StepResult>> {
        let mut results = Vec::new();
        while !self.finished(state) {
            let r = self.step(state)?;
            observer(self, state, &r)?;
            results.push(r);
        }
        Ok(results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_and_growth() {
        let p = SolverParams {
            dt: 0.003,
            dt_max: 0.003,
            dt_min: 0.001,
            ..Default::default()
        };
        let (dt, s) = step_control(0.003, 3, false, &p).unwrap();
        assert_eq!((dt, s), (0.0015, 0));
        assert!(step_control(0.0015, 0, false, &p).is_err());
        let mut state = (0.002, 0);
        for _ in 0..4 {
            state = step_control(state.0, state.1, true, &p).unwrap();
            assert_eq!(state.0, 0.002);
        }
        state = step_control(state.0, state.1, true, &p).unwrap();
        assert!((state.0 - 0.0024).abs() < 1e-15 && state.1 == 0);
        for _ in 0..10 {
            state = step_control(state.0, state.1, true, &p).unwrap();
        }
        assert_eq!(state.0, 0.003);
    }

    #[test]
    fn params_are_validated() {
        assert!(SolverParams::default().validate().is_ok());
        let p = SolverParams {
            dt: 1.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config { .. })));
    }
}
