use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("element {element} is degenerate or inverted (signed volume {volume:e})")]
    DegenerateElement { element: usize, volume: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field `{name}` has {found} entries, expected {expected}")]
    FieldLength {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("entry ({row}, {col}) is not in the sparsity pattern; connectivity update missed")]
    OutsidePattern { row: usize, col: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("element {element} inverted in the current configuration (det F = {det:e})")]
    InvertedElement { element: usize, det: f64 },

    #[error("non-positive screened-Poisson value {value:e} in element {element}")]
    NonPositivePhi { element: usize, value: f64 },

    #[error("degenerate target simplex (Jacobian determinant {det:e})")]
    DegenerateSimplex { det: f64 },

    #[error("node {node} has no exterior faces")]
    NotExterior { node: usize },

    #[error("right Cauchy-Green tensor is not positive definite")]
    NonSpdStrain,

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("contact targets still changing after {retries} re-solves")]
    TargetsUnsettled { retries: usize },

    #[error("step size fell below dt_min at t = {time} (dt = {dt:e}): {cause}")]
    StepUnderflow { time: f64, dt: f64, cause: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
