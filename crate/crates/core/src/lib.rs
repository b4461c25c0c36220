//! Numerical continuation for the Demailly system on direct sums of line
//! bundles over a flat torus.
//!
//! The crate builds the exact t = 0 solution and follows it in t with a
//! damped Newton–Krylov corrector. Every accepted state is checked against
//! the integral identity and the Uhlenbeck–Yau inequality (see
//! [`diagnostics`]).

// Guards of the form `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod homotopy;
pub mod model;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{GreenKernel, Grid, ScalarField};
pub use homotopy::{closed_form_state, march, MarchReport, Problem, Schedule};
pub use model::{
    BundleSpec, CurvatureData, CurvaturePerturbation, DemaillyParams, ParamsInput, State,
};
