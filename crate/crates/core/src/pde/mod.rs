//! Implicit time stepping for the coupled fourth-order systems, the exact
//! discrete adjoint, and the forward-backward coupled solver.

mod coefficients;
mod coupled;
mod propagator;
mod state;

pub use coefficients::{CoefficientField, SignCertificate};
pub use coupled::{Backend, BlockRef, CoupledData, CoupledOperator, CoupledOptions, CoupledSolution, Coupling};
pub use propagator::{Propagator, SourceSpec, SourceTerm};
pub use state::{deinterleave, interleave, Orientation, TwoComponentState};
