//! Acceptance checks; prints one PASS/FAIL line per criterion.
//!
//! Runs with its own `main` so the report is visible without `--nocapture`.

use std::path::Path;
use std::time::Instant;

use adfc_core::adf::AdfParams;
use adfc_core::contact::{contact_element, contact_potential, interpolate, project_to_simplex, PenaltyWeighting};
use adfc_core::detection::{build_grid, detect, detect_brute_force};
use adfc_core::fem::SimplexGeometry;
use adfc_core::material::{element_energy, element_residual_stiffness, stress, stress_and_tangent, strain_energy, MaterialParams};
use adfc_core::mesh::{extract_boundary, generate, Mesh};
use adfc_core::scenario::{builtin, Scenario};
use adfc_core::solver::{Solver, SolverState, StepResult};
use adfc_core::verify::{self, Geometry};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn adf_exactness() -> Outcome {
    let t = Instant::now();
    let err = verify::strip_exactness(0.01, 0.2, 0.1, 1.0)?;
    let secs = t.elapsed().as_secs_f64();
    let tol = 0.02 * verify::STRIP_LENGTH;
    Ok((
        err <= tol && secs < 5.0,
        format!("max |g + x| = {err:.3e} (tol {tol}), {secs:.2} s"),
    ))
}

fn varadhan_limit() -> Outcome {
    let rows = verify::varadhan_sweep(Geometry::Disk, 0.005, &[0.4, 0.2, 0.1])?;
    let errs: Vec<f64> = rows.iter().map(|r| r.max_error).collect();
    let ok = errs.windows(2).all(|w| w[1] < w[0]);
    Ok((ok, format!("max error for l_c = 0.4, 0.2, 0.1: {errs:.4?}")))
}

/// Random simplex with Jacobian condition number below `max_cond`; returns
/// the stacked vertices and the condition number.
fn random_simplex(rng: &mut ChaCha8Rng, d: usize, max_cond: f64) -> (Vec<f64>, f64) {
    loop {
        let mut x: Vec<f64> = (0..(d + 1) * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut j = nalgebra::DMatrix::from_fn(d, d, |a, k| x[(k + 1) * d + a] - x[a]);
        if j.determinant() < 0.0 {
            // Swap the first two vertices for positive orientation.
            for a in 0..d {
                x.swap(a, d + a);
            }
            j = nalgebra::DMatrix::from_fn(d, d, |a, k| x[(k + 1) * d + a] - x[a]);
        }
        let sv = j.singular_values();
        let cond = sv.max() / sv.min();
        if cond.is_finite() && cond < max_cond {
            return (x, cond);
        }
    }
}

fn random_barycentric(rng: &mut ChaCha8Rng, d: usize, margin: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..=d).map(|_| rng.gen_range(margin..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn derivative_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut res_err, mut stiff_err) = (0.0f64, 0.0f64);
    for s in 0..100 {
        let d = 2 + s % 2;
        let m = d * (d + 2);
        let (xn, _) = random_simplex(&mut rng, d, 8.0);
        let w = random_barycentric(&mut rng, d, 0.05);
        let mut xc = xn.clone();
        for a in 0..d {
            xc.push((0..=d).map(|k| w[k] * xn[k * d + a]).sum());
        }
        let phi: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.3..0.95)).collect();
        let adf = AdfParams::new(rng.gen_range(0.1..1.0));
        let kappa = 1e3;
        let r = contact_element(&xc, &phi, adf, kappa, d)?;
        assert!(r.g < 0.0);
        let h = 1e-6;
        let shifted = |p: usize, s: f64| {
            let mut x = xc.clone();
            x[p] += s;
            x
        };
        let rmax = max_abs(r.residual.iter().copied());
        let kmax = max_abs(r.stiffness.iter().copied());
        for p in 0..m {
            let fd = (contact_potential(&shifted(p, h), &phi, adf, kappa, d)?
                - contact_potential(&shifted(p, -h), &phi, adf, kappa, d)?)
                / (2.0 * h);
            res_err = res_err.max((fd - r.residual[p]).abs() / rmax);
            let rp = contact_element(&shifted(p, h), &phi, adf, kappa, d)?.residual;
            let rm = contact_element(&shifted(p, -h), &phi, adf, kappa, d)?.residual;
            for i in 0..m {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                stiff_err = stiff_err.max((fd - r.stiffness[i * m + p]).abs() / kmax);
            }
        }
    }

    // Material: stress/tangent against the strain energy, element residual
    // and stiffness against the element energy.
    let p = MaterialParams::new(1e3, 0.3)?;
    let (mut s_err, mut t_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        let f = Matrix3::identity() + a;
        if f.determinant() < 0.2 {
            continue;
        }
        let c = f.transpose() * f;
        let dc = {
            let b = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            (b + b.transpose()) * 0.5
        };
        let h = 1e-6;
        let (s, t) = stress_and_tangent(&c, &p)?;
        let fd = (strain_energy(&(c + dc * h), &p)? - strain_energy(&(c - dc * h), &p)?) / (2.0 * h);
        let an = 0.5 * s.component_mul(&dc).sum();
        s_err = s_err.max((fd - an).abs() / s.norm().max(1e-300) / dc.norm());
        let ds = (stress(&(c + dc * h), &p)? - stress(&(c - dc * h), &p)?) / (2.0 * h);
        let tdc = Matrix3::from_fn(|i, j| {
            let mut acc = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    acc += t[i][j][k][l] * dc[(k, l)];
                }
            }
            acc
        });
        t_err = t_err.max((ds - tdc).norm() / tdc.norm().max(1e-300));
    }
    for s in 0..100 {
        let d = 2 + s % 2;
        let m = (d + 1) * d;
        let (xn, _) = random_simplex(&mut rng, d, 8.0);
        let geo = SimplexGeometry::new(&xn, d)?;
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let Ok(r) = element_residual_stiffness(&geo, &u, &p) else {
            continue;
        };
        let h = 1e-7;
        let rmax = max_abs(r.residual.iter().copied());
        let kmax = max_abs(r.stiffness.iter().copied());
        for j in 0..m {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[j] += h;
            um[j] -= h;
            let fd = (element_energy(&geo, &up, &p)? - element_energy(&geo, &um, &p)?) / (2.0 * h);
            s_err = s_err.max((fd - r.residual[j]).abs() / rmax);
            let rp = element_residual_stiffness(&geo, &up, &p)?.residual;
            let rm = element_residual_stiffness(&geo, &um, &p)?.residual;
            for i in 0..m {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                t_err = t_err.max((fd - r.stiffness[i * m + j]).abs() / kmax);
            }
        }
    }
    let ok = res_err <= 1e-6 && stiff_err <= 1e-5 && s_err <= 1e-6 && t_err <= 1e-5;
    Ok((
        ok,
        format!(
            "contact residual {res_err:.1e}, contact stiffness {stiff_err:.1e}, \
             material stress/residual {s_err:.1e}, tangent/stiffness {t_err:.1e}"
        ),
    ))
}

/// Incident force and `|∂f/∂g|` for a configuration with gap `g` and unit
/// gap gradient along y.
fn force_at_gap(g: f64, kappa: f64) -> adfc_core::Result<(f64, f64)> {
    let phi_p = g.exp();
    let p = [0.25, -0.5];
    let phi = |y: f64| phi_p * (1.0 + (y - p[1]));
    let x = [0., -1., 1., -1., 0., 0., p[0], p[1]];
    let r = contact_element(&x, &[phi(-1.0), phi(-1.0), phi(0.0)], AdfParams::new(1.0), kappa, 2)?;
    let f = r.incident_force(2);
    // ∂g/∂y_I = 1, so the incident yy stiffness is df/dg.
    Ok((f[0].hypot(f[1]), r.stiffness[7 * 8 + 7].abs()))
}

fn complementarity() -> Outcome {
    let kappa = 1e6;
    for g in [0.0, 1e-6, 1e-2, 0.5] {
        let (f, k) = force_at_gap(g, kappa)?;
        if f != 0.0 || k != 0.0 {
            return Ok((false, format!("nonzero response at g = {g}: |f| = {f:e}, |df/dg| = {k:e}")));
        }
    }
    let samples = [-1e-2, -1e-4, -1e-6];
    let vals = samples.iter().map(|&g| force_at_gap(g, kappa)).collect::<adfc_core::Result<Vec<_>>>()?;
    let decays = vals.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    let last = vals[vals.len() - 1];
    let ok = decays && last.0 < 1e-8 * kappa;
    let desc: Vec<String> = samples
        .iter()
        .zip(&vals)
        .map(|(g, (f, k))| format!("g={g:e}: |f|/κ={:.1e}, |df/dg|/κ={:.1e}", f / kappa, k / kappa))
        .collect();
    Ok((ok, format!("zero for g >= 0; {}", desc.join("; "))))
}

fn projection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut recon, mut worst_ratio) = (0.0f64, 0.0f64);
    let mut beaten = 0;
    for d in [2, 3] {
        let n: usize = if d == 2 { 200 } else { 40 };
        let spacing = 1.0 / n as f64;
        let grid: Vec<[f64; 3]> = if d == 2 {
            (0..=n)
                .flat_map(|i| (0..=n - i).map(move |j| [i as f64 * spacing, j as f64 * spacing, 0.0]))
                .collect()
        } else {
            (0..=n)
                .flat_map(|i| {
                    (0..=n - i).flat_map(move |j| {
                        (0..=n - i - j).map(move |k| [i as f64 * spacing, j as f64 * spacing, k as f64 * spacing])
                    })
                })
                .collect()
        };
        for _ in 0..1000 {
            let (xn, cond) = random_simplex(&mut rng, d, 10.0);
            let w = random_barycentric(&mut rng, d, 0.0);
            let x: Vec<f64> = (0..d).map(|a| (0..=d).map(|k| w[k] * xn[k * d + a]).sum()).collect();
            let xi = project_to_simplex(&xn, &x, d)?;
            let back = interpolate(&xn, &xi, d);
            let dist = |p: &[f64; 3]| (0..d).map(|a| (p[a] - x[a]).powi(2)).sum::<f64>().sqrt();
            let e = dist(&back);
            recon = recon.max(e);
            let (best, best_d) = grid
                .iter()
                .map(|g| (g, dist(&interpolate(&xn, g, d))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if best_d < e {
                beaten += 1;
            }
            let bound = cond * spacing * (d as f64).sqrt();
            let gap = (0..d).map(|a| (xi[a] - best[a]).powi(2)).sum::<f64>().sqrt();
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    let ok = recon <= 1e-12 && beaten == 0 && worst_ratio <= 1.0;
    Ok((
        ok,
        format!(
            "2000 simplices: reconstruction {recon:.1e}, grid argmin within {:.0}% of its bound, \
             grid never closer: {}",
            100.0 * worst_ratio,
            beaten == 0
        ),
    ))
}

fn rotate(x: &mut [f64], d: usize, angles: [f64; 3], shift: [f64; 3], centre: [f64; 3]) {
    let rot = |v: [f64; 3], axis: usize, a: f64| {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut w = v;
        w[i] = a.cos() * v[i] - a.sin() * v[j];
        w[j] = a.sin() * v[i] + a.cos() * v[j];
        w
    };
    for p in x.chunks_mut(d) {
        let mut v = [0.0; 3];
        for a in 0..d {
            v[a] = p[a] - centre[a];
        }
        v = rot(v, 2, angles[2]);
        if d == 3 {
            v = rot(rot(v, 0, angles[0]), 1, angles[1]);
        }
        for a in 0..d {
            p[a] = v[a] + centre[a] + shift[a];
        }
    }
}

fn random_scene(rng: &mut ChaCha8Rng, d: usize) -> adfc_core::Result<(Mesh, Vec<f64>)> {
    let h = rng.gen_range(0.08..0.2);
    let (a, b) = if d == 2 {
        let a = if rng.gen_bool(0.5) {
            generate::disk([0.0, 0.0], 0.5, h)?
        } else {
            generate::rectangle_h([-0.5, -0.4], [0.5, 0.4], h)?
        };
        let b = generate::regular_polygon([0.0, 0.0], 0.45, rng.gen_range(3..9), 0.0, rng.gen_range(0.08..0.2))?;
        (a, b)
    } else {
        let a = generate::block_h([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5], rng.gen_range(0.2..0.35))?;
        let b = generate::block_h([-0.3, -0.4, -0.35], [0.3, 0.4, 0.35], rng.gen_range(0.15..0.3))?;
        (a, b)
    };
    let na = a.num_nodes();
    let mesh = Mesh::merge(&[a.with_body(0), b.with_body(1)])?;
    let mut coords = mesh.coords().to_vec();
    let angles = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
    let shift = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    rotate(&mut coords[na * d..], d, angles, shift, [0.0; 3]);
    Ok((mesh, coords))
}

fn detection_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut mismatches, mut pairs, mut empty) = (0, 0, 0);
    for s in 0..50 {
        let d = if s < 30 { 2 } else { 3 };
        let (mesh, coords) = random_scene(&mut rng, d)?;
        let boundary = extract_boundary(&mesh);
        let grid = build_grid(&mesh, &coords, &boundary);
        let fast = detect(&mesh, &coords, &grid, None, None)?.pairs();
        let slow = detect_brute_force(&mesh, &coords, &boundary, None, None)?.pairs();
        if fast != slow {
            mismatches += 1;
        }
        if slow.is_empty() {
            empty += 1;
        }
        pairs += slow.len();
    }
    Ok((
        mismatches == 0 && empty < 10,
        format!("50 scenes, {pairs} pairs in total, {empty} without overlap, {mismatches} mismatches"),
    ))
}

fn patch() -> Outcome {
    let w = verify::patch_test(PenaltyWeighting::EdgeProjection, &[])?;
    let n = verify::patch_test(PenaltyWeighting::None, &[])?;
    Ok((
        w.nonuniformity < 0.05 && n.nonuniformity > w.nonuniformity,
        format!(
            "edge projection {:.2}% (mean {:.3} of {}), unweighted {:.2}%",
            100.0 * w.nonuniformity,
            w.mean,
            w.applied_pressure,
            100.0 * n.nonuniformity
        ),
    ))
}

struct Compression {
    h: f64,
    completed: Result<(), String>,
    /// Steps of the reference run, followed by those of the replay.
    results: Vec<StepResult>,
    steps: usize,
    v_max: f64,
    seconds: f64,
    restart: Option<bool>,
}

fn compression_solver(h: f64) -> adfc_core::Result<Solver> {
    let ov = vec![format!("mesh.h={h}")];
    let (problem, params) = Scenario::parse(builtin::COMPRESSION2D, &ov, Path::new("."))?.scenario.build()?;
    Solver::new(problem, params)
}

/// Runs the 2D compression scene; with `checkpoint`, also saves the state at
/// that step and replays the remainder from the saved file.
fn compression(h: f64, checkpoint: Option<(usize, &Path)>) -> adfc_core::Result<Compression> {
    let t = Instant::now();
    let mut solver = compression_solver(h)?;
    let mut state = solver.initial_state();
    let mut results = Vec::new();
    let outcome = solver.run(&mut state, |_, st, r| {
        if let Some((k, path)) = checkpoint {
            if r.step == k {
                st.save(path)?;
            }
        }
        results.push(r.clone());
        Ok(())
    });
    let seconds = t.elapsed().as_secs_f64();
    let mut restart = None;
    if let (Ok(_), Some((k, path))) = (&outcome, checkpoint) {
        let mut again = compression_solver(h)?;
        let mut resumed = SolverState::load(path)?;
        let tail = again.run(&mut resumed, |_, _, _| Ok(()))?;
        restart = Some(resumed == state && tail == results[k..]);
        results.extend(tail);
    }
    Ok(Compression {
        h,
        completed: outcome.map(|_| ()).map_err(|e| e.to_string()),
        steps: state.step,
        v_max: state.v_max_history.last().copied().unwrap_or(f64::NAN),
        results,
        seconds,
        restart,
    })
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn main() {
    let mut all = true;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        println!("criterion {n:>2} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report(1, "ADF exactness on the strip", adf_exactness());
    report(2, "Varadhan limit on the disk", varadhan_limit());
    report(3, "derivative consistency", derivative_consistency());
    report(4, "complementarity and smoothness", complementarity());
    report(5, "projection oracle", projection_oracle());
    report(6, "detection equivalence", detection_equivalence());
    report(7, "patch test", patch());

    let dir = tempfile::tempdir().expect("temp dir");
    let checkpoint = dir.path().join("state.json");
    let runs: Vec<adfc_core::Result<Compression>> = [0.02, 0.015, 0.01]
        .into_iter()
        .map(|h| compression(h, (h == 0.02).then_some((150, checkpoint.as_path()))))
        .collect();
    let trend: Outcome = (|| {
        let mut lines = Vec::new();
        let mut ok = true;
        let mut prev = f64::INFINITY;
        for run in &runs {
            let c = run.as_ref().map_err(|e| e.to_string())?;
            let med = median(c.results[..c.steps].iter().map(|r| r.iterations).collect());
            ok &= c.completed.is_ok() && c.v_max < prev && med <= 10;
            prev = c.v_max;
            lines.push(match &c.completed {
                Ok(()) => format!(
                    "h={}: {} steps, v_max={:.3e}, median iterations {med}, {:.0} s",
                    c.h,
                    c.steps,
                    c.v_max,
                    c.seconds
                ),
                Err(e) => format!("h={}: aborted ({e})", c.h),
            });
        }
        Ok((ok, lines.join("; ")))
    })();
    report(8, "2D compression trend", trend);
    let balance: Outcome = (|| {
        let mut worst = 0.0f64;
        let mut n = 0;
        for run in &runs {
            let c = run.as_ref().map_err(|e| e.to_string())?;
            for r in &c.results {
                worst = worst.max(r.contact_imbalance);
                n += r.assignments;
            }
        }
        Ok((worst <= 1e-12, format!("max imbalance {worst:.1e} over {n} element evaluations at convergence")))
    })();
    report(9, "contact self-equilibrium", balance);
    let restart: Outcome = (|| {
        let c = runs[0].as_ref().map_err(|e| e.to_string())?;
        match c.restart {
            Some(ok) => Ok((ok, format!("resumed h={} at step 150; remaining steps and final state identical: {ok}", c.h))),
            None => Ok((false, "reference run did not complete".into())),
        }
    })();
    report(10, "restart determinism", restart);

    if !all {
        std::process::exit(1);
    }
}
