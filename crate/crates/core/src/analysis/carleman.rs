use crate::error::Result;
use crate::leader::solve_dual;
use crate::mesh::{Field, RegionMask, SpaceTimeGrid};
use crate::pde::{Propagator, TwoComponentState};
use crate::problem::HierarchicProblem;
use crate::weights::CarlemanWeights;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{random_terminal, sample_seeds, Distribution};

/// `I(φ)` split into its six weighted terms, in the order
/// `|φ|², |∇φ|², |Δφ|², |∇²φ|², |∇Δφ|², |φ_t|² + |Δ²φ|²`.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CarlemanTerms {
    pub total: f64,
    pub terms: [f64; 6],
}

impl CarlemanTerms {
    fn add(&mut self, other: &CarlemanTerms) {
        self.total += other.total;
        for (a, b) in self.terms.iter_mut().zip(other.terms) {
            *a += b;
        }
    }
}

/// Nodal value with zero ghosts outside the grid.
fn at(grid: &SpaceTimeGrid, v: &[f64], i: isize, j: isize) -> f64 {
    let n = grid.n_x() as isize;
    let jmax = if grid.dim() == 2 { n } else { 1 };
    if i < 0 || i >= n || j < 0 || j >= jmax {
        0.0
    } else {
        v[grid.node_from_index(i as usize, j as usize)]
    }
}

fn offset(axis: usize, d: isize) -> (isize, isize) {
    if axis == 0 {
        (d, 0)
    } else {
        (0, d)
    }
}

/// `|∇v|²` at every node from centered differences.
pub fn grad_sq(grid: &SpaceTimeGrid, v: &[f64]) -> Array1<f64> {
    Array1::from_shape_fn(grid.n_nodes(), |node| {
        let [i, j] = grid.node_index(node);
        let (i, j) = (i as isize, j as isize);
        (0..grid.dim())
            .map(|a| {
                let (di, dj) = offset(a, 1);
                let d = (at(grid, v, i + di, j + dj) - at(grid, v, i - di, j - dj)) / (2.0 * grid.h(a));
                d * d
            })
            .sum()
    })
}

/// `|∇²v|² = Σ_{a,b} (∂_a ∂_b v)²` at every node.
pub fn hessian_sq(grid: &SpaceTimeGrid, v: &[f64]) -> Array1<f64> {
    Array1::from_shape_fn(grid.n_nodes(), |node| {
        let [i, j] = grid.node_index(node);
        let (i, j) = (i as isize, j as isize);
        let c = at(grid, v, i, j);
        let mut s = 0.0;
        for a in 0..grid.dim() {
            let (di, dj) = offset(a, 1);
            let h = grid.h(a);
            let d = (at(grid, v, i + di, j + dj) - 2.0 * c + at(grid, v, i - di, j - dj)) / (h * h);
            s += d * d;
        }
        if grid.dim() == 2 {
            let m = (at(grid, v, i + 1, j + 1) - at(grid, v, i + 1, j - 1) - at(grid, v, i - 1, j + 1)
                + at(grid, v, i - 1, j - 1))
                / (4.0 * grid.h(0) * grid.h(1));
            s += 2.0 * m * m;
        }
        s
    })
}

/// `I(φ)` with weights `e^{-2sσ}` and powers of `λ`, `sτ`. Only interior
/// levels contribute since the weights vanish at `t = 0, T`; `φ_t` is the
/// forward difference.
pub fn carleman_i(
    grid: &SpaceTimeGrid,
    propagator: &Propagator,
    weights: &CarlemanWeights,
    field: &Field,
) -> CarlemanTerms {
    let lambda = weights.lambda();
    let (lap, bilap) = (propagator.laplacian(), propagator.bilaplacian());
    let coef = [
        lambda.powi(8),
        lambda.powi(6),
        lambda.powi(4),
        lambda.powi(4),
        lambda.powi(2),
        1.0,
    ];
    let powers = [6.0, 4.0, 3.0, 2.0, 1.0, -1.0];
    let w = grid.dt() * grid.cell_volume();
    let mut out = CarlemanTerms::default();
    for k in 1..grid.n_t() {
        let phi = field.level(k);
        let phi_s = phi.as_slice().expect("contiguous level");
        let dphi = grad_sq(grid, phi_s);
        let lap_phi = lap.apply(phi);
        let hess = hessian_sq(grid, phi_s);
        let grad_lap = grad_sq(grid, lap_phi.as_slice().unwrap());
        let bi = bilap.apply(phi);
        let next = field.level(k + 1);
        for j in 0..grid.n_nodes() {
            let pt = (next[j] - phi[j]) / grid.dt();
            let integrand = [
                phi[j] * phi[j],
                dphi[j],
                lap_phi[j] * lap_phi[j],
                hess[j],
                grad_lap[j],
                pt * pt + bi[j] * bi[j],
            ];
            for t in 0..6 {
                let v = w * coef[t] * weights.damped(k, j, powers[t]) * integrand[t];
                out.terms[t] += v;
            }
        }
    }
    out.total = out.terms.iter().sum();
    out
}

/// `λ²⁴ ∫∫_{ω×(0,T)} e^{-2sσ}(sτ)³⁴ ψ₁²`.
pub fn carleman_rhs(grid: &SpaceTimeGrid, weights: &CarlemanWeights, omega: &RegionMask, psi1: &Field) -> f64 {
    let w = grid.dt() * grid.cell_volume() * weights.lambda().powi(24);
    let mut s = 0.0;
    for k in 1..grid.n_t() {
        for j in omega.nodes() {
            let v = psi1.get(k, j);
            s += weights.damped(k, j, 34.0) * v * v;
        }
    }
    w * s
}

/// `Ī_{[a,b)}(φ) = ∫_a^b ∫_Ω e^{-2sσ̄}[(sτ̄)⁶ |φ|² + (sτ̄)³ |Δφ|²]`, levels
/// with `a ≤ t_k < b`, so adjacent windows add up exactly.
pub fn carleman_i_bar(
    grid: &SpaceTimeGrid,
    propagator: &Propagator,
    weights: &CarlemanWeights,
    field: &Field,
    window: (f64, f64),
    use_unmodified: bool,
) -> f64 {
    let tol = 1e-9 * grid.dt();
    let w = grid.dt() * grid.cell_volume();
    let mut s = 0.0;
    for k in 0..grid.n_levels() {
        let t = grid.time(k);
        if t < window.0 - tol || t >= window.1 - tol {
            continue;
        }
        let phi = field.level(k);
        let lap_phi = propagator.laplacian().apply(phi);
        for j in 0..grid.n_nodes() {
            let (w6, w3) = if use_unmodified {
                (weights.damped(k, j, 6.0), weights.damped(k, j, 3.0))
            } else {
                (weights.damped_bar(k, j, 6.0), weights.damped_bar(k, j, 3.0))
            };
            s += w6 * phi[j] * phi[j] + w3 * lap_phi[j] * lap_phi[j];
        }
    }
    w * s
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanSample {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish; `+∞` flags `rhs = 0 < lhs`.
    pub ratio: Option<f64>,
    /// Breakdown of `I(ψ₁) + I(ψ₂) + I(θ₁) + I(θ₂)`.
    pub breakdown: CarlemanTerms,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanReport {
    pub lambda: f64,
    pub s: f64,
    pub samples: Vec<CarlemanSample>,
    pub max_ratio: f64,
    pub all_finite: bool,
    pub distribution: Distribution,
}

/// `θ_j = α₁ γ_j¹ + α₂ γ_j²`.
pub fn theta(problem: &HierarchicProblem, gamma: &[TwoComponentState; 2]) -> TwoComponentState {
    let a = problem.alpha();
    let mut t = gamma[0].scaled(a[0]);
    t.axpy(a[1], &gamma[1]);
    t
}

/// Sample the coupled Carleman inequality on random terminal data.
pub fn carleman_ratio_check(problem: &HierarchicProblem, n_samples: usize, seed: u64) -> Result<CarlemanReport> {
    let grid = problem.grid();
    let w = problem.weights();
    let prop = problem.propagator();
    let samples: Vec<CarlemanSample> = sample_seeds(seed, n_samples)
        .into_par_iter()
        .map(|sd| -> Result<CarlemanSample> {
            let mut rng = ChaCha8Rng::seed_from_u64(sd);
            let psi_t = random_terminal(grid, &mut rng);
            let dual = solve_dual(problem, &psi_t)?;
            let th = theta(problem, &dual.gamma);
            let mut breakdown = CarlemanTerms::default();
            for f in [&dual.psi.c1, &dual.psi.c2, &th.c1, &th.c2] {
                breakdown.add(&carleman_i(grid, prop, w, f));
            }
            let lhs = breakdown.total;
            let rhs = carleman_rhs(grid, w, problem.omega(), &dual.psi.c1);
            Ok(CarlemanSample {
                seed: sd,
                lhs,
                rhs,
                ratio: super::ratio(lhs, rhs),
                breakdown,
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = samples.iter().filter_map(|s| s.ratio).collect();
    Ok(CarlemanReport {
        lambda: w.lambda(),
        s: w.s(),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        all_finite: ratios.iter().all(|r| r.is_finite()),
        distribution: Distribution::of(&ratios),
        samples,
    })
}
