//! Direct solution of the assembled systems. Backed by faer's supernodal
//! sparse Cholesky; the symbolic factorization is cached per pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Par, Side};

use super::sparse::SparseSystem;
use crate::error::{Error, Result};

/// Relative residual demanded from every solve.
pub const DEFAULT_RTOL: f64 = 1e-10;

enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        match self {
            Factor::Llt(f) => f.solve_in_place(x.as_mut()),
            Factor::Lu(f) => f.solve_in_place(x.as_mut()),
        }
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Reusable solver; keeps the symbolic analysis while the pattern is unchanged.
pub struct LinearSolver {
    rtol: f64,
    symbolic: Option<(u64, SymbolicLlt<usize>)>,
    symbolic_lu: Option<(u64, SymbolicLu<usize>)>,
    allow_indefinite: bool,
}

impl Default for LinearSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl LinearSolver {
    pub fn new() -> Self {
        // Sequential kernels keep every solve bit-reproducible.
        faer::set_global_parallelism(Par::Seq);
        LinearSolver {
            rtol: DEFAULT_RTOL,
            symbolic: None,
            symbolic_lu: None,
            allow_indefinite: false,
        }
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    /// Falls back to pivoted LU when Cholesky breaks down (symmetric but
    /// indefinite tangents).
    pub fn allow_indefinite(mut self, yes: bool) -> Self {
        self.allow_indefinite = yes;
        self
    }

    pub fn solve(&mut self, system: &SparseSystem) -> Result<Vec<f64>> {
        let n = system.size();
        if n == 0 {
            return Ok(Vec::new());
        }
        let b = &system.rhs;
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let pattern = system.pattern();
        // CSR of a structurally symmetric matrix is the CSC of its transpose;
        // Cholesky reads the lower triangle only.
        let sym = SymbolicSparseColMat::new_checked(
            n,
            n,
            pattern.row_ptr().to_vec(),
            None,
            pattern.col_indices().to_vec(),
        );
        let mat = SparseColMat::new(sym, system.values.clone());

        let symbolic = match &self.symbolic {
            Some((id, s)) if *id == pattern.id() => s.clone(),
            _ => {
                let s = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
                    .map_err(|e| Error::LinearSolve(format!("symbolic analysis: {e:?}")))?;
                self.symbolic = Some((pattern.id(), s.clone()));
                s
            }
        };
        let factor = match Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower) {
            Ok(f) => Factor::Llt(f),
            Err(_) if self.allow_indefinite => {
                // The LU reads the full matrix, i.e. the transpose of what was
                // assembled; identical for symmetric operators.
                let symbolic = match &self.symbolic_lu {
                    Some((id, s)) if *id == pattern.id() => s.clone(),
                    _ => {
                        let s = SymbolicLu::try_new(mat.symbolic())
                            .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
                        self.symbolic_lu = Some((pattern.id(), s.clone()));
                        s
                    }
                };
                let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
                    .map_err(|e| Error::LinearSolve(format!("singular matrix: {e:?}")))?;
                Factor::Lu(lu)
            }
            Err(_) => return Err(Error::NotSpd),
        };

        let mut x = factor.solve(b);
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let r = residual(system, &x);
            rel = norm(&r) / bnorm;
            if !rel.is_finite() {
                break;
            }
            if rel <= 1e-3 * self.rtol {
                break;
            }
            let dx = factor.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        let r = residual(system, &x);
        rel = rel.min(norm(&r) / bnorm);
        if !(rel <= self.rtol) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve(format!(
                "relative residual {rel:e} exceeds {:e}; matrix is singular or too ill-conditioned",
                self.rtol
            )));
        }
        Ok(x)
    }
}

/// One-shot solve of an SPD system to relative residual [`DEFAULT_RTOL`].
pub fn solve_linear(system: &SparseSystem) -> Result<Vec<f64>> {
    LinearSolver::new().solve(system)
}

fn residual(system: &SparseSystem, x: &[f64]) -> Vec<f64> {
    let ax = system.matvec(x);
    system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
