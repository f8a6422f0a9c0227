//! Auxiliary function `η` and the Carleman weight families built from it.

mod carleman;
mod eta;

pub use carleman::{
    auto_s, damped_value, eval_modified_weights, eval_sigma_star_rho_star, eval_sigma_tau, sigma_star_at,
    CarlemanParams, CarlemanWeights, AUTO_S_EXPONENT,
};
pub use eta::{build_eta, EtaFunction, UnitProfile};
