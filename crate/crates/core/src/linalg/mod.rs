//! Dense-band factorization and matrix-free iterative solvers.

mod banded;
mod krylov;

pub use banded::{BandedLu, BandedMatrix};
pub use krylov::{conjugate_gradient, dot, gmres, power_iteration, KrylovOptions, KrylovOutcome, PowerEstimate};
