//! Leader: approximate null controllability through the dual functional.
//!
//! For terminal data `ψ^T` the dual system couples forward states `γ^i` with
//! the backward adjoint `ψ`; the leader control is `g = ψ₁ χ_ω`. Minimising
//! the penalised functional
//! `F̃_ε(ψ^T) = ½∫∫_{ω×(0,T)} ψ₁² + ⟨y⁰, ψ(0)⟩ - Σ α_i ∫∫_{O_d×(0,T)} γ^i·y_d^i + ε/2 ‖ψ^T‖²`
//! is the linear problem `(G + εI) ψ^T = -y_free(T)`, solved by CG.

use crate::error::Result;
use crate::linalg::{conjugate_gradient, KrylovOptions};
use crate::mesh::{spatial_inner, Integration, SpaceTimeGrid};
use crate::nash::{follower_costs, solve_nash_optimality, solve_optimality_system, ControlProfile};
use crate::pde::{deinterleave, interleave, CoupledData, TwoComponentState};
use crate::problem::HierarchicProblem;
use ndarray::Array1;
use serde::Serialize;

pub type SpatialPair = [Array1<f64>; 2];

/// `⟨a, b⟩_h` over both components.
pub fn pair_inner(grid: &SpaceTimeGrid, a: &SpatialPair, b: &SpatialPair) -> f64 {
    spatial_inner(grid, a[0].view(), b[0].view(), None) + spatial_inner(grid, a[1].view(), b[1].view(), None)
}

pub fn pair_norm(grid: &SpaceTimeGrid, a: &SpatialPair) -> f64 {
    pair_inner(grid, a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub psi: TwoComponentState,
    pub gamma: [TwoComponentState; 2],
    pub coupled_residual: f64,
}

/// Solve the dual system from terminal data `ψ^T`.
pub fn solve_dual(problem: &HierarchicProblem, psi_t: &SpatialPair) -> Result<DualSolution> {
    let op = problem.dual_operator()?;
    let mut data = CoupledData::zeros(problem.grid().n_nodes(), 2, 1);
    data.terminal[0] = psi_t.clone();
    let sol = op.solve(&data)?;
    let mut f = sol.forward.into_iter();
    Ok(DualSolution {
        psi: sol.backward.into_iter().next().unwrap(),
        gamma: [f.next().unwrap(), f.next().unwrap()],
        coupled_residual: sol.residual,
    })
}

/// `g = ψ₁ χ_ω` on the levels the forward scheme reads.
pub fn leader_control(problem: &HierarchicProblem, dual: &DualSolution) -> ControlProfile {
    let grid = problem.grid();
    ControlProfile::from_field(
        grid,
        dual.psi.c1.clone(),
        problem.omega(),
        ControlProfile::leader_levels(grid),
    )
    .expect("grid")
}

/// Unpenalised `F̃(ψ^T)`.
pub fn evaluate_f_tilde(problem: &HierarchicProblem, psi_t: &SpatialPair) -> Result<f64> {
    let dual = solve_dual(problem, psi_t)?;
    let grid = problem.grid();
    let g = leader_control(problem, &dual);
    let quad = 0.5 * g.inner(grid, &g);
    Ok(quad + linear_part(problem, &dual)?)
}

/// `⟨y⁰, ψ(0)⟩ - Σ α_i ⟨γ^i, y_d^i⟩_{O_d}`.
fn linear_part(problem: &HierarchicProblem, dual: &DualSolution) -> Result<f64> {
    let grid = problem.grid();
    let psi0 = dual.psi.level_pair(0);
    let mut v = pair_inner(grid, problem.y0(), &psi0);
    for i in 0..2 {
        v -= problem.alpha()[i] * dual.gamma[i].inner(grid, problem.y_d(i), Integration::state().on(problem.od()))?;
    }
    Ok(v)
}

/// `y(T)` of the follower equilibrium with `g = 0`.
pub fn free_terminal(problem: &HierarchicProblem) -> Result<SpatialPair> {
    let sol = solve_optimality_system(problem, None, false)?;
    Ok(sol.forward[0].level_pair(problem.grid().n_t()))
}

/// `G a`: terminal state of the homogeneous equilibrium driven by `g = ψ₁(a) χ_ω`.
pub fn gramian_apply(problem: &HierarchicProblem, a: &SpatialPair) -> Result<SpatialPair> {
    let dual = solve_dual(problem, a)?;
    let g = leader_control(problem, &dual);
    let sol = solve_optimality_system(problem, Some(&g), true)?;
    Ok(sol.forward[0].level_pair(problem.grid().n_t()))
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityCheck {
    /// `⟨y(T), ψ^T⟩`
    pub lhs: f64,
    /// `⟨y⁰, ψ(0)⟩ + ∫∫_ω g ψ₁ - Σ α_i ∫∫_{O_d} γ^i·y_d^i`
    pub rhs: f64,
    /// `|lhs - rhs|` over the largest term magnitude.
    pub relative_gap: f64,
}

/// Check the identity linking the primal equilibrium driven by `g` and the dual
/// system from `ψ^T`.
pub fn verify_duality_identity(
    problem: &HierarchicProblem,
    g: &ControlProfile,
    psi_t: &SpatialPair,
) -> Result<DualityCheck> {
    let grid = problem.grid();
    let primal = solve_optimality_system(problem, Some(g), false)?;
    let dual = solve_dual(problem, psi_t)?;
    let lhs = pair_inner(grid, &primal.forward[0].level_pair(grid.n_t()), psi_t);
    let t_init = pair_inner(grid, problem.y0(), &dual.psi.level_pair(0));
    let psi_ctrl = ControlProfile::from_field(grid, dual.psi.c1.clone(), g.mask(), g.levels())?;
    let t_ctrl = g.inner(grid, &psi_ctrl);
    let mut terms = vec![lhs, t_init, t_ctrl];
    let mut rhs = t_init + t_ctrl;
    for i in 0..2 {
        let t =
            problem.alpha()[i] * dual.gamma[i].inner(grid, problem.y_d(i), Integration::state().on(problem.od()))?;
        rhs -= t;
        terms.push(t);
    }
    let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let relative_gap = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
    Ok(DualityCheck { lhs, rhs, relative_gap })
}

#[derive(Debug, Clone)]
pub struct HumResult {
    pub epsilon: f64,
    pub psi_t: SpatialPair,
    pub g: ControlProfile,
    pub h: [ControlProfile; 2],
    pub y: TwoComponentState,
    pub psi: TwoComponentState,
    /// `‖y(T)‖` under the computed controls.
    pub terminal_norm: f64,
    /// `‖y(T)‖` with `g = 0`.
    pub free_terminal_norm: f64,
    /// `½ ∫∫_{ω×(0,T)} g²`
    pub leader_cost: f64,
    pub follower_costs: [f64; 2],
    /// `F̃_ε` at the minimiser.
    pub f_tilde: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    /// `F̃_ε` along the CG iterates; non-increasing.
    pub energy_history: Vec<f64>,
    pub nash_residual: f64,
}

/// Serializable summary of a [`HumResult`].
#[derive(Debug, Clone, Serialize)]
pub struct HumSummary {
    pub epsilon: f64,
    pub terminal_norm: f64,
    pub free_terminal_norm: f64,
    pub leader_cost: f64,
    pub follower_costs: [f64; 2],
    pub f_tilde: f64,
    pub iterations: usize,
    pub converged: bool,
    pub nash_residual: f64,
}

impl HumResult {
    pub fn summary(&self) -> HumSummary {
        HumSummary {
            epsilon: self.epsilon,
            terminal_norm: self.terminal_norm,
            free_terminal_norm: self.free_terminal_norm,
            leader_cost: self.leader_cost,
            follower_costs: self.follower_costs,
            f_tilde: self.f_tilde,
            iterations: self.iterations,
            converged: self.converged,
            nash_residual: self.nash_residual,
        }
    }
}

/// Minimise `F̃_ε` and rebuild the controlled equilibrium.
pub fn minimize_f_tilde(problem: &HierarchicProblem, epsilon: f64) -> Result<HumResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(crate::Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let grid = problem.grid();
    let settings = problem.settings();
    let free = free_terminal(problem)?;
    let b: Vec<f64> = interleave(free[0].view(), free[1].view()).iter().map(|v| -v).collect();
    let vol = grid.cell_volume();
    let outcome = conjugate_gradient(
        |x, out| {
            let a = deinterleave(x);
            let ga = gramian_apply(problem, &a)?;
            let v = interleave(ga[0].view(), ga[1].view());
            for ((o, gv), xi) in out.iter_mut().zip(v).zip(x) {
                *o = gv + epsilon * xi;
            }
            Ok(())
        },
        |a, b| vol * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        &b,
        None,
        KrylovOptions {
            tol: settings.cg_tol,
            max_iter: settings.cg_max_iter,
            restart: 0,
        },
    )?;
    if !outcome.converged {
        log::warn!(
            "CG stopped after {} iterations at relative residual {:e}",
            outcome.iterations,
            outcome.residual_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    let psi_t = deinterleave(&outcome.x);
    let dual = solve_dual(problem, &psi_t)?;
    let g = leader_control(problem, &dual);
    let eq = solve_nash_optimality(problem, Some(&g))?;
    let terminal = eq.y.level_pair(grid.n_t());
    let leader_cost = 0.5 * g.inner(grid, &g);
    let f_tilde = leader_cost + linear_part(problem, &dual)? + 0.5 * epsilon * pair_inner(grid, &psi_t, &psi_t);
    let follower_costs = follower_costs(problem, &eq.y, &eq.nash.h)?;
    Ok(HumResult {
        epsilon,
        terminal_norm: pair_norm(grid, &terminal),
        free_terminal_norm: pair_norm(grid, &free),
        psi_t,
        g,
        h: eq.nash.h,
        y: eq.y,
        psi: dual.psi,
        leader_cost,
        follower_costs,
        f_tilde,
        iterations: outcome.iterations,
        converged: outcome.converged,
        residual_history: outcome.residual_history,
        energy_history: outcome.energy_history,
        nash_residual: eq.nash.residual,
    })
}

/// Variational residual of the minimiser: the largest normalised
/// `|⟨(G + εI)ψ̂ + y_free(T), φ⟩| / (‖y_free(T)‖ ‖φ‖)` over random `φ`.
///
/// `(G + εI)ψ̂ + y_free(T) = y(T) + εψ̂`, so no extra solve is needed.
pub fn variational_residual(problem: &HierarchicProblem, result: &HumResult, directions: usize, seed: u64) -> f64 {
    use rand::{RngExt, SeedableRng};
    let grid = problem.grid();
    let n = grid.n_nodes();
    let terminal = result.y.level_pair(grid.n_t());
    let r = [
        &terminal[0] + &(&result.psi_t[0] * result.epsilon),
        &terminal[1] + &(&result.psi_t[1] * result.epsilon),
    ];
    let scale = if result.free_terminal_norm > 0.0 {
        result.free_terminal_norm
    } else {
        1.0
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..directions)
        .map(|_| {
            let phi = [
                Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
                Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
            ];
            pair_inner(grid, &r, &phi).abs() / (scale * pair_norm(grid, &phi))
        })
        .fold(0.0, f64::max)
}

/// Full pipeline for one `ε`: leader by HUM, followers at equilibrium.
pub fn run_hierarchic_control(problem: &HierarchicProblem, epsilon: f64) -> Result<HumResult> {
    minimize_f_tilde(problem, epsilon)
}
