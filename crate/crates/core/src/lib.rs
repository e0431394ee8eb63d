//! Finite-strain contact between simplicial bodies whose gap comes from a
//! screened-Poisson approximate distance function.

// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adf;
pub mod contact;
pub mod detection;
pub mod error;
pub mod fem;
pub mod material;
pub mod mesh;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
