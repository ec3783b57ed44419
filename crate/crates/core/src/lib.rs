//! Grey-bright vector solitons in a three-level Λ medium with two optical
//! fields: parameter solver, closed-form fields, residual checks, split-step
//! propagation, linear stability operator and propagation diagnostics.

// `!(x > 0.0)` is used deliberately so NaN lands in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod bloch;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod residual;
pub mod solver;
pub mod spectral;
pub mod ssfm;
pub mod stability;

pub use error::{Error, Result};
pub use io::{Preset, RunConfig};
pub use model::{FieldState, MediumParams, Sign, SignConvention, SimGrid, SolitonSolution};
pub use solver::{solve_parameters, SolverConfig};
