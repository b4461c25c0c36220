//! Linear kernels and the nonlinear solvers built on them.

pub mod helmholtz;
pub mod krylov;
pub mod newton;
pub mod operators;

pub use helmholtz::solve_helmholtz;
pub use newton::{newton_at_t, NewtonReport};
pub use operators::{picard_step, solve_t0, u_step, v_step};
