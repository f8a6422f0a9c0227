use crate::error::Result;
use crate::leader::solve_dual;
use crate::mesh::{inner_product, Field, Integration};
use crate::problem::HierarchicProblem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::carleman::theta;
use super::{random_terminal, sample_seeds, Distribution};

/// Which classical energy estimate of the dual system to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyEstimate {
    /// `∫∫_Q |θ|² ≤ C (α₁²/μ₁² + α₂²/μ₂²) ∫∫_Q |ρ*^{-2} ψ₁|²`
    ThetaQ,
    /// Same on `(0, T/2)` with `|Δθ|²` added on the left.
    ThetaHalf,
    /// `Σ_i ∫∫_Q |γ^i|² ≤ C Σ_i μ_i^{-2} ∫∫_{ω_i×(0,T)} |ρ*^{-2} ψ₁|²`
    Gamma,
}

impl std::str::FromStr for EnergyEstimate {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta_Q" | "theta_q" => Ok(Self::ThetaQ),
            "theta_half" => Ok(Self::ThetaHalf),
            "gamma" => Ok(Self::Gamma),
            other => Err(crate::Error::InvalidParameter(format!(
                "unknown estimate '{other}' (expected theta_Q, theta_half or gamma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySample {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub which: EnergyEstimate,
    pub samples: Vec<EnergySample>,
    /// Empirical constant: the largest sampled ratio.
    pub constant: f64,
    pub distribution: Distribution,
}

/// `c · ρ*^{-2}(t_k) ψ₁` with the product formed before squaring.
fn damped_adjoint(problem: &HierarchicProblem, psi1: &Field, c: f64) -> Field {
    let mut f = psi1.clone();
    let v = f.values_mut();
    for k in 0..v.nrows() {
        let r = c * problem.weights().rho_star_inv_sq(k);
        v.row_mut(k).mapv_inplace(|x| x * r);
    }
    f
}

/// Both sides of the selected estimate for one terminal datum.
pub fn energy_sides(
    problem: &HierarchicProblem,
    which: EnergyEstimate,
    psi_t: &crate::leader::SpatialPair,
) -> Result<(f64, f64)> {
    let grid = problem.grid();
    let dual = solve_dual(problem, psi_t)?;
    let (a, mu) = (problem.alpha(), problem.mu());
    let half = 0.5 * grid.horizon();
    let sum_sq = |f: &Field, over: Integration<'_>| inner_product(grid, f, f, over);
    Ok(match which {
        EnergyEstimate::ThetaQ | EnergyEstimate::ThetaHalf => {
            let th = theta(problem, &dual.gamma);
            let (state, source) = if which == EnergyEstimate::ThetaQ {
                (Integration::state(), Integration::source())
            } else {
                (
                    Integration::state().window(0.0, half),
                    Integration::source().window(0.0, half),
                )
            };
            let mut lhs = sum_sq(&th.c1, state)? + sum_sq(&th.c2, state)?;
            if which == EnergyEstimate::ThetaHalf {
                let lap = problem.propagator().laplacian();
                for c in [&th.c1, &th.c2] {
                    let mut l = c.clone();
                    for k in 0..grid.n_levels() {
                        let row = lap.apply(c.level(k));
                        l.level_mut(k).assign(&row);
                    }
                    lhs += sum_sq(&l, state)?;
                }
            }
            // (α₁²/μ₁² + α₂²/μ₂²) |ρ*^{-2}ψ₁|², scaled inside to stay finite
            let coef = ((a[0] / mu[0]).powi(2) + (a[1] / mu[1]).powi(2)).sqrt();
            let d = damped_adjoint(problem, &dual.psi.c1, coef);
            (lhs, sum_sq(&d, source)?)
        }
        EnergyEstimate::Gamma => {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for i in 0..2 {
                lhs += dual.gamma[i].inner(grid, &dual.gamma[i], Integration::state())?;
                let d = damped_adjoint(problem, &dual.psi.c1, 1.0 / mu[i]);
                rhs += sum_sq(&d, Integration::source().on(problem.omega_i(i)))?;
            }
            (lhs, rhs)
        }
    })
}

/// Empirical constant of a classical energy estimate over random `ψ^T`.
pub fn energy_constant_check(
    problem: &HierarchicProblem,
    which: EnergyEstimate,
    n_samples: usize,
    seed: u64,
) -> Result<EnergyReport> {
    let grid = problem.grid();
    let samples: Vec<EnergySample> = sample_seeds(seed, n_samples)
        .into_par_iter()
        .map(|sd| -> Result<EnergySample> {
            let mut rng = ChaCha8Rng::seed_from_u64(sd);
            let psi_t = random_terminal(grid, &mut rng);
            let (lhs, rhs) = energy_sides(problem, which, &psi_t)?;
            Ok(EnergySample {
                seed: sd,
                lhs,
                rhs,
                ratio: super::ratio(lhs, rhs),
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.ratio.filter(|r| r.is_finite()))
        .collect();
    Ok(EnergyReport {
        which,
        constant: ratios.iter().cloned().fold(0.0, f64::max),
        distribution: Distribution::of(&ratios),
        samples,
    })
}
