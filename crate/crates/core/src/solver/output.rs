use std::fmt::Write as _;
use std::io::Write;

use super::{SolverState, StepResult};
use crate::error::Result;

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn write_log_header(out: &mut impl Write, dim: usize, bc_names: &[String]) -> Result<()> {
    let mut line = String::from(
        "step,time,dt,iterations,retries,cuts,assignments,rebuilt,v_max,residual,contact_imbalance",
    );
    for name in bc_names {
        for axis in &AXES[..dim] {
            write!(line, ",{name}_r{axis}").expect("string write");
        }
    }
    writeln!(out, "{line}")?;
    Ok(())
}

pub fn write_log_row(out: &mut impl Write, dim: usize, r: &StepResult) -> Result<()> {
    let mut line = format!(
        "{},{:.12e},{:.12e},{},{},{},{},{},{:.12e},{:.6e},{:.3e}",
        r.step,
        r.time,
        r.dt,
        r.iterations,
        r.retries,
        r.cuts,
        r.assignments,
        u8::from(r.rebuilt),
        r.v_max,
        r.residual_history.last().copied().unwrap_or(0.0),
        r.contact_imbalance,
    );
    for (_, f) in &r.reactions {
        for v in &f[..dim] {
            write!(line, ",{v:.12e}").expect("string write");
        }
    }
    writeln!(out, "{line}")?;
    Ok(())
}

/// Run-level figures written to `summary.txt` as `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub completed: bool,
    pub steps: usize,
    pub final_time: f64,
    pub total_iterations: usize,
    pub median_iterations: f64,
    pub max_iterations: usize,
    pub final_v_max: f64,
    pub max_v_max: f64,
    pub rebuilds: usize,
    pub cuts: usize,
    pub max_contact_imbalance: f64,
    /// Largest absolute reaction component per boundary condition.
    pub peak_reactions: Vec<(String, [f64; 3])>,
    /// Reactions at the final step.
    pub final_reactions: Vec<(String, [f64; 3])>,
}

impl RunSummary {
    pub fn new(results: &[StepResult], state: &SolverState, completed: bool) -> Self {
        let mut iters: Vec<usize> = results.iter().map(|r| r.iterations).collect();
        iters.sort_unstable();
        let median_iterations = match iters.len() {
            0 => 0.0,
            n if n % 2 == 1 => iters[n / 2] as f64,
            n => 0.5 * (iters[n / 2 - 1] + iters[n / 2]) as f64,
        };
        let mut peak: Vec<(String, [f64; 3])> = Vec::new();
        for r in results {
            if peak.is_empty() {
                peak = r.reactions.iter().map(|(n, _)| (n.clone(), [0.0; 3])).collect();
            }
            for (p, (_, f)) in peak.iter_mut().zip(&r.reactions) {
                for a in 0..3 {
                    if f[a].abs() > p.1[a].abs() {
                        p.1[a] = f[a];
                    }
                }
            }
        }
        RunSummary {
            completed,
            steps: state.step,
            final_time: state.time,
            total_iterations: state.total_iterations,
            median_iterations,
            max_iterations: iters.last().copied().unwrap_or(0),
            final_v_max: state.v_max_history.last().copied().unwrap_or(0.0),
            max_v_max: state.v_max_history.iter().copied().fold(0.0, f64::max),
            rebuilds: state.rebuilds,
            cuts: results.iter().map(|r| r.cuts).sum(),
            max_contact_imbalance: results.iter().map(|r| r.contact_imbalance).fold(0.0, f64::max),
            peak_reactions: peak,
            final_reactions: results.last().map(|r| r.reactions.clone()).unwrap_or_default(),
        }
    }

    pub fn to_text(&self, dim: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "completed = {}", self.completed);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "final_time = {:.12e}", self.final_time);
        let _ = writeln!(s, "total_newton_iterations = {}", self.total_iterations);
        let _ = writeln!(s, "median_newton_iterations = {}", self.median_iterations);
        let _ = writeln!(s, "max_newton_iterations = {}", self.max_iterations);
        let _ = writeln!(s, "final_v_max = {:.12e}", self.final_v_max);
        let _ = writeln!(s, "max_v_max = {:.12e}", self.max_v_max);
        let _ = writeln!(s, "connectivity_rebuilds = {}", self.rebuilds);
        let _ = writeln!(s, "step_cuts = {}", self.cuts);
        let _ = writeln!(s, "max_contact_imbalance = {:.3e}", self.max_contact_imbalance);
        for (name, f) in &self.peak_reactions {
            for a in 0..dim {
                let _ = writeln!(s, "peak_reaction.{name}.{} = {:.12e}", AXES[a], f[a]);
            }
        }
        for (name, f) in &self.final_reactions {
            for a in 0..dim {
                let _ = writeln!(s, "final_reaction.{name}.{} = {:.12e}", AXES[a], f[a]);
            }
        }
        s
    }
}
