use super::control::ControlProfile;
use crate::error::{Error, Result};
use crate::linalg::power_iteration;
use crate::mesh::{Field, RegionMask, SpaceTimeGrid};
use crate::pde::{Orientation, TwoComponentState};
use crate::problem::HierarchicProblem;
use ndarray::Array1;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

fn zero_pair(grid: &SpaceTimeGrid) -> [Array1<f64>; 2] {
    [Array1::zeros(grid.n_nodes()), Array1::zeros(grid.n_nodes())]
}

/// Both components restricted to `mask`.
pub fn restrict_state(state: &TwoComponentState, mask: &RegionMask) -> TwoComponentState {
    let mut out = state.clone();
    out.c1.restrict(mask);
    out.c2.restrict(mask);
    out
}

/// `Λ_i h`: the state driven from zero by `h χ_{ω_i}` alone.
pub fn apply_lambda(problem: &HierarchicProblem, h: &ControlProfile) -> Result<TwoComponentState> {
    let grid = problem.grid();
    let z = zero_pair(grid);
    problem
        .propagator()
        .solve_forward(Some(&h.as_source(grid)), [z[0].view(), z[1].view()])
}

/// Backward adjoint solution driven by `w` with zero terminal data.
fn adjoint_state(problem: &HierarchicProblem, w: &TwoComponentState) -> Result<TwoComponentState> {
    let grid = problem.grid();
    let z = zero_pair(grid);
    problem.propagator().solve_backward(Some(w), [z[0].view(), z[1].view()])
}

/// `Λ_i^* w`, the exact discrete adjoint of [`apply_lambda`]: first adjoint
/// component on `ω_i` over the follower levels.
pub fn apply_lambda_star(problem: &HierarchicProblem, i: usize, w: &TwoComponentState) -> Result<ControlProfile> {
    let psi = adjoint_state(problem, w)?;
    follower_from_adjoint(problem, i, psi.c1)
}

fn follower_from_adjoint(problem: &HierarchicProblem, i: usize, field: Field) -> Result<ControlProfile> {
    let grid = problem.grid();
    ControlProfile::from_field(grid, field, problem.omega_i(i), ControlProfile::follower_levels(grid))
}

pub fn follower_zeros(problem: &HierarchicProblem, i: usize) -> ControlProfile {
    let grid = problem.grid();
    ControlProfile::zeros(grid, problem.omega_i(i), ControlProfile::follower_levels(grid))
}

/// `μ_i ρ*² h_i` on the follower levels.
pub fn weighted_mass(problem: &HierarchicProblem, i: usize, h: &ControlProfile) -> ControlProfile {
    let grid = problem.grid();
    let mu = problem.mu()[i];
    let w = problem.weights();
    let mut f = h.values().clone();
    {
        let v = f.values_mut();
        for k in 0..grid.n_levels() {
            let r = if h.levels().contains(&k) {
                mu * w.rho_star_sq(k)
            } else {
                0.0
            };
            v.row_mut(k).mapv_inplace(|x| x * r);
        }
    }
    ControlProfile::from_field(grid, f, h.mask(), h.levels()).expect("same grid")
}

/// `K h = (μ_i ρ*² h_i + α_i Λ_i^*[(Λ₁h₁ + Λ₂h₂) χ_{O_d}])_i`.
///
/// Costs one forward and one backward solve: both followers share the state
/// and the adjoint, and differ only in the restriction.
pub fn apply_k(problem: &HierarchicProblem, h: &[ControlProfile; 2]) -> Result<[ControlProfile; 2]> {
    let grid = problem.grid();
    let mut src = h[0].as_source(grid);
    src.axpy(1.0, &h[1].as_source(grid));
    let z = zero_pair(grid);
    let y = problem
        .propagator()
        .solve_forward(Some(&src), [z[0].view(), z[1].view()])?;
    let psi = adjoint_state(problem, &restrict_state(&y, problem.od()))?;
    let alpha = problem.alpha();
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let mut k = weighted_mass(problem, i, &h[i]);
        k.axpy(alpha[i], &follower_from_adjoint(problem, i, psi.c1.clone())?);
        out.push(k);
    }
    Ok([out.remove(0), out.remove(0)])
}

/// `‖Λ_i χ_{O_d}‖` from `H_i` into `L²(Q)²`, by power iteration on
/// `Λ_i^* χ_{O_d} Λ_i`.
pub fn lambda_od_norms(problem: &HierarchicProblem) -> Result<[f64; 2]> {
    let grid = problem.grid();
    let settings = problem.settings();
    let w = ControlProfile::dof_weight(grid);
    let mut out = [0.0; 2];
    for (i, slot) in out.iter_mut().enumerate() {
        let mask = problem.omega_i(i);
        let levels = ControlProfile::follower_levels(grid);
        let n = mask.count() * levels.len();
        if n == 0 {
            return Err(Error::Validation(format!(
                "follower {} has an empty control space",
                i + 1
            )));
        }
        // smooth positive start, far from any eigenvector orthogonal to the top one
        let start: Vec<f64> = (0..n).map(|k| 1.0 + 0.25 * ((k as f64) * 0.7).sin()).collect();
        let est = power_iteration(
            |v, out| {
                let h = ControlProfile::from_vec(grid, mask, levels.clone(), v);
                let y = apply_lambda(problem, &h)?;
                let r = apply_lambda_star(problem, i, &restrict_state(&y, problem.od()))?;
                out.copy_from_slice(&r.to_vec());
                Ok(())
            },
            |a, b| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
            &start,
            settings.power_max_iter,
            settings.power_tol,
        )?;
        *slot = est.eigenvalue.max(0.0).sqrt();
    }
    Ok(out)
}

/// Ingredients of the coercivity bound `(K h, h) ≥ τ ‖h‖²`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoercivityReport {
    pub lambda_norms: [f64; 2],
    pub thresholds: [f64; 2],
    pub mu: [f64; 2],
    pub rho0: f64,
    /// `min_i { μ_i ρ₀² - α_{3-i}/4 · ‖Λ_i χ_{O_d}‖² }`
    pub tau: f64,
    pub holds: bool,
}

pub fn coercivity_tau(problem: &HierarchicProblem) -> Result<CoercivityReport> {
    let norms = problem.lambda_norms()?;
    let thresholds = problem.mu_thresholds()?;
    let mu = problem.mu();
    let alpha = problem.alpha();
    let rho0 = problem.weights().rho0();
    let r2 = rho0 * rho0;
    let tau = (mu[0] * r2 - alpha[1] / 4.0 * norms[0].powi(2)).min(mu[1] * r2 - alpha[0] / 4.0 * norms[1].powi(2));
    Ok(CoercivityReport {
        lambda_norms: norms,
        thresholds,
        mu,
        rho0,
        tau,
        holds: tau > 0.0,
    })
}

/// Rayleigh quotients `(K h, h) / ‖h‖²` for random `h`, with the bound `τ`.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivitySamples {
    pub tau: f64,
    pub quotients: Vec<f64>,
    pub min_quotient: f64,
    pub holds: bool,
}

pub fn sample_coercivity(problem: &HierarchicProblem, samples: usize, seed: u64) -> Result<CoercivitySamples> {
    let grid = problem.grid();
    let report = coercivity_tau(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotients = Vec::with_capacity(samples);
    for _ in 0..samples {
        let h = random_pair(problem, &mut rng);
        let kh = apply_k(problem, &h)?;
        let num = kh[0].inner(grid, &h[0]) + kh[1].inner(grid, &h[1]);
        let den = h[0].inner(grid, &h[0]) + h[1].inner(grid, &h[1]);
        quotients.push(num / den);
    }
    let min_quotient = quotients.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CoercivitySamples {
        tau: report.tau,
        holds: quotients.iter().all(|q| *q >= report.tau * (1.0 - 1e-12)),
        quotients,
        min_quotient,
    })
}

/// Uniform `(-1, 1)` follower pair.
pub fn random_pair(problem: &HierarchicProblem, rng: &mut ChaCha8Rng) -> [ControlProfile; 2] {
    let grid = problem.grid();
    let make = |i: usize, rng: &mut ChaCha8Rng| {
        let f = Field::from_fn(grid, |_, _| rng.random_range(-1.0..1.0));
        ControlProfile::from_field(grid, f, problem.omega_i(i), ControlProfile::follower_levels(grid)).expect("grid")
    };
    let a = make(0, rng);
    let b = make(1, rng);
    [a, b]
}

/// Random state-space field `w ∈ L²(Q)²`.
pub fn random_state(grid: &SpaceTimeGrid, rng: &mut ChaCha8Rng) -> TwoComponentState {
    let c1 = Field::from_fn(grid, |_, _| rng.random_range(-1.0..1.0));
    let c2 = Field::from_fn(grid, |_, _| rng.random_range(-1.0..1.0));
    TwoComponentState::new(c1, c2, Orientation::Backward)
}
