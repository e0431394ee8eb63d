use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adfc_core::contact::PenaltyWeighting;
use adfc_core::mesh::{write_snapshot, Configuration};
use adfc_core::scenario::parse_scenario;
use adfc_core::solver::{write_log_header, write_log_row, RunSummary, Solver, SolverState};
use adfc_core::verify::{self, Geometry};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adfc", version, about = "Contact solver with a screened-Poisson distance gap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// `section.key=value`; repeatable. Array entries are addressed by
        /// index or name, e.g. `body.punch.E=2e4`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Snapshot every N steps (overrides `output.snapshots`).
        #[arg(long, value_name = "N")]
        snapshots: Option<usize>,
        /// Resume from a saved state.
        #[arg(long, value_name = "STATE")]
        resume: Option<PathBuf>,
    },
    /// Print the distance error of the screened-Poisson gap against an exact distance.
    VerifyAdf {
        #[arg(long, default_value = "disk")]
        geometry: String,
        #[arg(long = "lc", value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1])]
        lc: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
    },
    /// Two-block patch test with and without the edge-projection penalty.
    PatchTest {
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            overrides,
            out,
            snapshots,
            resume,
        } => run(&config, &overrides, &out, snapshots, resume.as_deref()),
        Command::VerifyAdf { geometry, lc, h } => verify_adf(&geometry, &lc, h),
        Command::PatchTest { overrides } => patch_test(&overrides),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn snapshot(solver: &Solver, state: &SolverState, path: &Path) -> Result<()> {
    let mesh = &solver.problem().mesh;
    let config = Configuration::from_displacements(mesh, state.u.clone())?;
    let (phi, gap) = match solver.last_field() {
        Some(f) => (f.phi.clone(), f.nodal_gap()),
        None => (vec![1.0; mesh.num_nodes()], vec![0.0; mesh.num_nodes()]),
    };
    write_snapshot(mesh, &config, &[("phi", &phi), ("gap", &gap)], path)?;
    Ok(())
}

/// Returns `Ok(false)` when the run aborted after writing its outputs.
fn run(config: &Path, overrides: &[String], out: &Path, snapshots: Option<usize>, resume: Option<&Path>) -> Result<bool> {
    let parsed = parse_scenario(config, overrides).with_context(|| format!("reading {}", config.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("effective.toml"), &parsed.effective)?;
    let scenario = parsed.scenario;
    let every = snapshots.unwrap_or(scenario.output.snapshots);
    let checkpoints = scenario.output.checkpoints;
    let (problem, params) = scenario.build()?;
    let dim = problem.dim();
    let bc_names: Vec<String> = problem.bcs.iter().map(|b| b.name.clone()).collect();
    let mut solver = Solver::new(problem, params)?;
    let mut state = match resume {
        Some(p) => SolverState::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => solver.initial_state(),
    };

    let mut log = BufWriter::new(File::create(out.join("log.csv"))?);
    write_log_header(&mut log, dim, &bc_names)?;
    if every > 0 && resume.is_none() {
        snapshot(&solver, &state, &out.join("step_00000.vtk"))?;
    }
    let mut results = Vec::new();
    let outcome = solver.run(&mut state, |s, st, r| {
        write_log_row(&mut log, dim, r)?;
        if every > 0 && r.step % every == 0 {
            snapshot(s, st, &out.join(format!("step_{:05}.vtk", r.step)))
                .map_err(|e| adfc_core::Error::Io(std::io::Error::other(e.to_string())))?;
        }
        if checkpoints > 0 && r.step % checkpoints == 0 {
            st.save(out.join(format!("state_{:05}.json", r.step)))?;
        }
        results.push(r.clone());
        Ok(())
    });
    log.flush()?;
    if every > 0 && state.step % every != 0 {
        snapshot(&solver, &state, &out.join(format!("step_{:05}.vtk", state.step)))?;
    }
    let completed = outcome.is_ok();
    let summary = RunSummary::new(&results, &state, completed);
    fs::write(out.join("summary.txt"), summary.to_text(dim))?;
    state.save(out.join("state_last.json"))?;
    match outcome {
        Ok(_) => {
            println!("{}: {} steps, final v_max = {:.3e}", config.display(), state.step, summary.final_v_max);
            Ok(true)
        }
        Err(e) => {
            eprintln!("run aborted at t = {}: {e}", state.time);
            Ok(false)
        }
    }
}

fn verify_adf(geometry: &str, lc: &[f64], h: f64) -> Result<bool> {
    let geometry: Geometry = geometry.parse()?;
    let rows = verify::varadhan_sweep(geometry, h, lc)?;
    print!("{}", verify::format_table(&rows));
    Ok(true)
}

fn patch_test(overrides: &[String]) -> Result<bool> {
    for w in [PenaltyWeighting::EdgeProjection, PenaltyWeighting::None] {
        let r = verify::patch_test(w, overrides)?;
        println!(
            "{:?}: mean traction {:.4} (applied {:.4}), nonuniformity {:.2}%",
            w,
            r.mean,
            r.applied_pressure,
            100.0 * r.nonuniformity
        );
        for (x, t) in &r.tractions {
            println!("  x = {x:.4}  t = {t:.4}");
        }
    }
    Ok(true)
}
