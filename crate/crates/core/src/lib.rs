//! Stackelberg–Nash hierarchic control of coupled fourth-order parabolic systems.

// Index loops mirror the component/follower notation; NaN-aware negated
// comparisons are intentional.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod leader;
pub mod linalg;
pub mod mesh;
pub mod nash;
pub mod pde;
pub mod problem;
pub mod weights;

pub use error::{Error, Result};
