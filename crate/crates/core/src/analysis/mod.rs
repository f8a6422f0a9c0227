//! Sampled checks of the weighted inequalities behind the control results:
//! the coupled Carleman estimate, the observability inequality and the
//! classical energy estimates of the dual system.
//!
//! Nothing here proves a bound; every routine reports empirical ratios.

mod carleman;
mod energy;
mod observability;

pub use carleman::{
    carleman_i, carleman_i_bar, carleman_ratio_check, carleman_rhs, grad_sq, hessian_sq, theta, CarlemanReport,
    CarlemanSample, CarlemanTerms,
};
pub use energy::{energy_constant_check, energy_sides, EnergyEstimate, EnergyReport, EnergySample};
pub use observability::{
    observability_forms, observability_ratio, observability_sides, ObservabilityReport, ObservabilitySample,
    DENOMINATOR_SHIFT,
};

use crate::leader::SpatialPair;
use crate::mesh::SpaceTimeGrid;
use ndarray::Array1;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Per-sample seeds drawn from one master seed, so results do not depend on
/// how samples are scheduled across threads.
pub fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Uniform `(-1, 1)` nodal terminal data.
pub fn random_terminal(grid: &SpaceTimeGrid, rng: &mut ChaCha8Rng) -> SpatialPair {
    let n = grid.n_nodes();
    let a = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let b = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    [a, b]
}

/// `lhs / rhs`; `None` when both vanish, `+∞` when only `rhs` does.
pub fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if rhs > 0.0 {
        Some(lhs / rhs)
    } else if lhs > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

/// Quantile summary of finite ratios.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Distribution {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            count: v.len(),
            min: v[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: v[v.len() - 1],
        }
    }
}

#[cfg(test)]
mod tests;
