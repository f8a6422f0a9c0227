//! Follower equilibrium for a fixed leader control.
//!
//! Two independent routes compute the same equilibrium: Krylov iteration on
//! the operator `K` and a coupled forward/backward optimality system.

mod control;
mod operators;
mod solve;

pub use control::{write_controls_csv, ControlProfile};
pub use operators::{
    apply_k, apply_lambda, apply_lambda_star, coercivity_tau, follower_zeros, lambda_od_norms, random_pair,
    random_state, restrict_state, sample_coercivity, weighted_mass, CoercivityReport, CoercivitySamples,
};
pub use solve::{
    check_nash_stationarity, controlled_state, follower_controls_from_adjoints, follower_costs, leader_only_state,
    nash_residual, nash_rhs, solve_nash_operator, solve_nash_optimality, solve_optimality_system, NashRoute,
    NashSolution, OptimalityOutcome, StationarityReport,
};

#[cfg(test)]
mod tests;
