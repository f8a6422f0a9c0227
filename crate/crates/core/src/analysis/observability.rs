use crate::error::{Error, Result};
use crate::leader::{solve_dual, DualSolution, SpatialPair};
use crate::linalg::power_iteration;
use crate::mesh::{inner_product, Integration};
use crate::problem::HierarchicProblem;
use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{random_terminal, sample_seeds, Distribution};

/// Regularisation of the denominator form before its Cholesky factorisation.
pub const DENOMINATOR_SHIFT: f64 = 1e-14;

/// Both sides of the observability inequality for one terminal datum:
/// `lhs = ‖ψ(0)‖² + Σ_i ∫∫_Q |γ^i|²`, `rhs = ∫∫_{ω×(0,T)} ψ₁²`.
pub fn observability_sides(problem: &HierarchicProblem, dual: &DualSolution) -> Result<(f64, f64)> {
    let grid = problem.grid();
    let psi0 = dual.psi.level_pair(0);
    let mut lhs = crate::leader::pair_inner(grid, &psi0, &psi0);
    for g in &dual.gamma {
        lhs += g.inner(grid, g, Integration::state())?;
    }
    let rhs = inner_product(
        grid,
        &dual.psi.c1,
        &dual.psi.c1,
        Integration::source().on(problem.omega()),
    )?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilitySample {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub samples: Vec<ObservabilitySample>,
    pub sample_max: f64,
    pub all_finite: bool,
    pub distribution: Distribution,
    /// Generalised Rayleigh supremum of `lhs / (rhs + δ‖ψ^T‖²)`.
    pub power_estimate: f64,
    pub power_iterations: usize,
    pub power_converged: bool,
    /// Maximising terminal datum, components `(ψ₁^T, ψ₂^T)`.
    #[serde(skip)]
    pub maximizer: SpatialPair,
    /// Unregularised `lhs / rhs` at the maximiser.
    pub maximizer_ratio: f64,
}

/// Dense quadratic forms of both sides over the nodal basis of `ψ^T`,
/// in the `h`-weighted coordinates (so the forms are symmetric matrices).
pub fn observability_forms(problem: &HierarchicProblem) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let grid = problem.grid();
    let n = grid.n_nodes();
    let dim = 2 * n;
    let scale = grid.cell_volume().sqrt();
    // feature maps: ψ^T ↦ square roots of the weighted integrands
    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
        .into_par_iter()
        .map(|m| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut psi_t = [Array1::zeros(n), Array1::zeros(n)];
            // unit vector in the h-weighted inner product
            psi_t[m % 2][m / 2] = 1.0 / scale;
            let dual = solve_dual(problem, &psi_t)?;
            Ok(features(problem, &dual))
        })
        .collect::<Result<_>>()?;
    let rows_l = columns[0].0.len();
    let rows_r = columns[0].1.len();
    let fl = DMatrix::from_fn(rows_l, dim, |r, c| columns[c].0[r]);
    let fr = DMatrix::from_fn(rows_r, dim, |r, c| columns[c].1[r]);
    Ok((fl.transpose() * &fl, fr.transpose() * &fr))
}

fn features(problem: &HierarchicProblem, dual: &DualSolution) -> (Vec<f64>, Vec<f64>) {
    let grid = problem.grid();
    let (n, nt) = (grid.n_nodes(), grid.n_t());
    let sw = grid.cell_volume().sqrt();
    let swt = (grid.cell_volume() * grid.dt()).sqrt();
    let mut l = Vec::with_capacity(2 * n + 4 * n * nt);
    for c in 0..2 {
        l.extend(dual.psi.component(c).level(0).iter().map(|v| sw * v));
    }
    for g in &dual.gamma {
        for c in 0..2 {
            for k in 1..=nt {
                l.extend(g.component(c).level(k).iter().map(|v| swt * v));
            }
        }
    }
    let mut r = Vec::new();
    for k in 0..nt {
        let row = dual.psi.c1.level(k);
        r.extend(problem.omega().nodes().map(|j| swt * row[j]));
    }
    (l, r)
}

/// Sampled ratios plus the generalised power-iteration estimate.
pub fn observability_ratio(
    problem: &HierarchicProblem,
    n_samples: usize,
    power_iters: usize,
    seed: u64,
) -> Result<ObservabilityReport> {
    let grid = problem.grid();
    let samples: Vec<ObservabilitySample> = sample_seeds(seed, n_samples)
        .into_par_iter()
        .map(|sd| -> Result<ObservabilitySample> {
            let mut rng = ChaCha8Rng::seed_from_u64(sd);
            let psi_t = random_terminal(grid, &mut rng);
            let dual = solve_dual(problem, &psi_t)?;
            let (lhs, rhs) = observability_sides(problem, &dual)?;
            Ok(ObservabilitySample {
                seed: sd,
                lhs,
                rhs,
                ratio: super::ratio(lhs, rhs),
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = samples.iter().filter_map(|s| s.ratio).collect();

    let (l, r) = observability_forms(problem)?;
    let dim = l.nrows();
    let shifted = &r + DMatrix::identity(dim, dim) * DENOMINATOR_SHIFT;
    let chol = shifted.cholesky().ok_or(Error::Singular {
        context: "observability denominator",
        pivot: 0,
    })?;
    let lower = chol.l();
    // B = C⁻¹ L C⁻ᵀ is symmetric with the generalised eigenvalues of (L, R + δI)
    let linv_l = lower.solve_lower_triangular(&l).ok_or(Error::Singular {
        context: "observability factor",
        pivot: 0,
    })?;
    let b = lower
        .solve_lower_triangular(&linv_l.transpose())
        .ok_or(Error::Singular {
            context: "observability factor",
            pivot: 0,
        })?;
    let b = (&b + b.transpose()) * 0.5;
    let start: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * (i as f64).cos()).collect();
    let est = power_iteration(
        |v, out| {
            let y = &b * DVector::from_column_slice(v);
            out.copy_from_slice(y.as_slice());
            Ok(())
        },
        |a, c| a.iter().zip(c).map(|(x, y)| x * y).sum(),
        &start,
        power_iters,
        1e-12,
    )?;
    if !est.converged {
        log::warn!(
            "observability power iteration stopped after {} iterations",
            est.iterations
        );
    }
    // back to ψ^T coordinates: v = C⁻ᵀ u, then undo the h-weighting
    let u = DVector::from_vec(est.vector.clone());
    let v = lower.transpose().solve_upper_triangular(&u).ok_or(Error::Singular {
        context: "observability factor",
        pivot: 0,
    })?;
    let scale = grid.cell_volume().sqrt();
    let n = grid.n_nodes();
    let maximizer = [
        Array1::from_shape_fn(n, |j| v[2 * j] / scale),
        Array1::from_shape_fn(n, |j| v[2 * j + 1] / scale),
    ];
    let vl = (v.transpose() * &l * &v)[(0, 0)];
    let vr = (v.transpose() * &r * &v)[(0, 0)];
    Ok(ObservabilityReport {
        sample_max: ratios.iter().cloned().fold(0.0, f64::max),
        all_finite: ratios.iter().all(|r| r.is_finite()),
        distribution: Distribution::of(&ratios),
        samples,
        power_estimate: est.eigenvalue,
        power_iterations: est.iterations,
        power_converged: est.converged,
        maximizer,
        maximizer_ratio: if vr > 0.0 { vl / vr } else { f64::INFINITY },
    })
}
