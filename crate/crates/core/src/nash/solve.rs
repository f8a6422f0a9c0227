use super::control::ControlProfile;
use super::operators::{apply_k, apply_lambda, apply_lambda_star, random_pair, restrict_state};
use crate::error::{Error, Result};
use crate::linalg::{gmres, KrylovOptions};
use crate::mesh::Integration;
use crate::pde::{Backend, CoupledData, CoupledSolution, Orientation, TwoComponentState};
use crate::problem::HierarchicProblem;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NashRoute {
    /// GMRES on `K h = v`.
    Operator,
    /// Coupled forward/backward optimality system.
    Optimality,
}

#[derive(Debug, Clone)]
pub struct NashSolution {
    pub h: [ControlProfile; 2],
    pub route: NashRoute,
    /// `‖K h - v‖ / ‖v‖` (absolute when `v = 0`).
    pub residual: f64,
    pub iterations: usize,
}

/// Nash equilibrium from the optimality system, with its states.
#[derive(Debug, Clone)]
pub struct OptimalityOutcome {
    pub nash: NashSolution,
    pub y: TwoComponentState,
    pub phi: [TwoComponentState; 2],
    /// Fixed-point residual of the coupled solve.
    pub coupled_residual: f64,
    pub backend: Backend,
}

/// `u(g)`: the state driven by `g χ_ω` and `y⁰` without followers.
pub fn leader_only_state(problem: &HierarchicProblem, g: Option<&ControlProfile>) -> Result<TwoComponentState> {
    let grid = problem.grid();
    let src = g.map(|g| g.as_source(grid));
    let y0 = problem.y0();
    problem
        .propagator()
        .solve_forward(src.as_ref(), [y0[0].view(), y0[1].view()])
}

/// The full state `y(g, h₁, h₂)`.
pub fn controlled_state(
    problem: &HierarchicProblem,
    g: Option<&ControlProfile>,
    h: &[ControlProfile; 2],
) -> Result<TwoComponentState> {
    let grid = problem.grid();
    let mut src = h[0].as_source(grid);
    src.axpy(1.0, &h[1].as_source(grid));
    if let Some(g) = g {
        src.axpy(1.0, &g.as_source(grid));
    }
    let y0 = problem.y0();
    problem
        .propagator()
        .solve_forward(Some(&src), [y0[0].view(), y0[1].view()])
}

/// Right-hand side `v_i = α_i Λ_i^*[(y_d^i - u(g)) χ_{O_d}]`.
pub fn nash_rhs(problem: &HierarchicProblem, g: Option<&ControlProfile>) -> Result<[ControlProfile; 2]> {
    let u = leader_only_state(problem, g)?;
    let alpha = problem.alpha();
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let mut d = problem.y_d(i).clone();
        d.axpy(-1.0, &u);
        d.orientation = Orientation::Backward;
        let v = apply_lambda_star(problem, i, &restrict_state(&d, problem.od()))?;
        out.push(v.scaled(alpha[i]));
    }
    Ok([out.remove(0), out.remove(0)])
}

fn pair_norm(problem: &HierarchicProblem, h: &[ControlProfile; 2]) -> f64 {
    let g = problem.grid();
    (h[0].inner(g, &h[0]) + h[1].inner(g, &h[1])).sqrt()
}

/// `‖K h - v‖ / ‖v‖` in the follower inner product.
pub fn nash_residual(problem: &HierarchicProblem, g: Option<&ControlProfile>, h: &[ControlProfile; 2]) -> Result<f64> {
    let v = nash_rhs(problem, g)?;
    residual_against(problem, &v, h)
}

fn residual_against(problem: &HierarchicProblem, v: &[ControlProfile; 2], h: &[ControlProfile; 2]) -> Result<f64> {
    let mut r = apply_k(problem, h)?;
    for i in 0..2 {
        r[i].axpy(-1.0, &v[i]);
    }
    let vn = pair_norm(problem, v);
    let rn = pair_norm(problem, &r);
    Ok(if vn > 0.0 { rn / vn } else { rn })
}

fn split(problem: &HierarchicProblem, x: &[f64]) -> [ControlProfile; 2] {
    let grid = problem.grid();
    let levels = ControlProfile::follower_levels(grid);
    let n0 = problem.omega_i(0).count() * levels.len();
    [
        ControlProfile::from_vec(grid, problem.omega_i(0), levels.clone(), &x[..n0]),
        ControlProfile::from_vec(grid, problem.omega_i(1), levels, &x[n0..]),
    ]
}

fn join(h: &[ControlProfile; 2]) -> Vec<f64> {
    let mut v = h[0].to_vec();
    v.extend(h[1].to_vec());
    v
}

/// Nash equilibrium by GMRES on `K h = v`, right-preconditioned with the
/// diagonal `1 / (μ_i ρ*²)`.
pub fn solve_nash_operator(problem: &HierarchicProblem, g: Option<&ControlProfile>) -> Result<NashSolution> {
    let grid = problem.grid();
    let settings = problem.settings();
    let v = nash_rhs(problem, g)?;
    let b = join(&v);
    let levels = ControlProfile::follower_levels(grid);
    let mu = problem.mu();
    let mut diag = Vec::with_capacity(b.len());
    for i in 0..2 {
        let count = problem.omega_i(i).count();
        for k in levels.clone() {
            let d = 1.0 / (mu[i] * problem.weights().rho_star_sq(k));
            diag.extend(std::iter::repeat_n(d, count));
        }
    }
    let w = ControlProfile::dof_weight(grid);
    let outcome = gmres(
        |x, out| {
            let kh = apply_k(problem, &split(problem, x))?;
            out.copy_from_slice(&join(&kh));
            Ok(())
        },
        |x, out| {
            for ((o, xi), d) in out.iter_mut().zip(x).zip(&diag) {
                *o = xi * d;
            }
        },
        |a, b| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        &b,
        KrylovOptions {
            tol: settings.nash_tol,
            max_iter: settings.nash_max_iter,
            restart: settings.gmres_restart,
        },
    )?;
    let h = split(problem, &outcome.x);
    let residual = residual_against(problem, &v, &h)?;
    if !outcome.converged {
        return Err(Error::NotConverged {
            method: "GMRES for the Nash system",
            iterations: outcome.iterations,
            residual,
        });
    }
    Ok(NashSolution {
        h,
        route: NashRoute::Operator,
        residual,
        iterations: outcome.iterations,
    })
}

/// Nash equilibrium from the coupled system
/// `y` forward with sources `g χ_ω - Σ (1/μ_i) ρ*^{-2} φ^i₁ χ_{ω_i}`,
/// `φ^i` backward with sources `α_i (y - y_d^i) χ_{O_d}` and zero terminal data.
pub fn solve_nash_optimality(problem: &HierarchicProblem, g: Option<&ControlProfile>) -> Result<OptimalityOutcome> {
    let sol = solve_optimality_system(problem, g, false)?;
    let mut sol_b = sol.backward.into_iter();
    let phi = [sol_b.next().unwrap(), sol_b.next().unwrap()];
    let y = sol.forward.into_iter().next().unwrap();
    let h = follower_controls_from_adjoints(problem, &phi);
    let residual = nash_residual(problem, g, &h)?;
    Ok(OptimalityOutcome {
        nash: NashSolution {
            h,
            route: NashRoute::Optimality,
            residual,
            iterations: sol.iterations,
        },
        y,
        phi,
        coupled_residual: sol.residual,
        backend: sol.backend,
    })
}

/// Raw coupled solve of the optimality system. With `homogeneous`, `y⁰` and
/// the targets are replaced by zero, leaving only the response to `g`.
pub fn solve_optimality_system(
    problem: &HierarchicProblem,
    g: Option<&ControlProfile>,
    homogeneous: bool,
) -> Result<CoupledSolution> {
    let grid = problem.grid();
    let op = problem.optimality_operator()?;
    let n = grid.n_nodes();
    let mut data = CoupledData::zeros(n, 1, 2);
    if !homogeneous {
        data.initial[0] = problem.y0().clone();
    }
    data.forward_sources[0] = g.map(|g| g.as_source(grid));
    let alpha = problem.alpha();
    for i in 0..2 {
        if homogeneous {
            continue;
        }
        let mut d = restrict_state(problem.y_d(i), problem.od()).scaled(-alpha[i]);
        d.orientation = Orientation::Backward;
        data.backward_sources[i] = if d.is_zero() { None } else { Some(d) };
        data.terminal[i] = [Array1::zeros(n), Array1::zeros(n)];
    }
    op.solve(&data)
}

/// `h_i = -(1/μ_i) ρ*^{-2} φ^i₁ χ_{ω_i}`.
pub fn follower_controls_from_adjoints(
    problem: &HierarchicProblem,
    phi: &[TwoComponentState; 2],
) -> [ControlProfile; 2] {
    let grid = problem.grid();
    let mu = problem.mu();
    let make = |i: usize| {
        let mut f = phi[i].c1.clone();
        let v = f.values_mut();
        for k in 0..grid.n_levels() {
            let r = -problem.weights().rho_star_inv_sq(k) / mu[i];
            v.row_mut(k).mapv_inplace(|x| x * r);
        }
        ControlProfile::from_field(grid, f, problem.omega_i(i), ControlProfile::follower_levels(grid)).expect("grid")
    };
    [make(0), make(1)]
}

/// Follower costs
/// `J_i = α_i/2 ‖y - y_d^i‖²_{O_d × (0,T)} + μ_i/2 ‖ρ* h_i‖²_{ω_i × (0,T)}`.
pub fn follower_costs(problem: &HierarchicProblem, y: &TwoComponentState, h: &[ControlProfile; 2]) -> Result<[f64; 2]> {
    let grid = problem.grid();
    let alpha = problem.alpha();
    let mu = problem.mu();
    let mut out = [0.0; 2];
    for i in 0..2 {
        let mut d = y.clone();
        d.axpy(-1.0, problem.y_d(i));
        let track = d.inner(grid, &d, Integration::state().on(problem.od()))?;
        let mass = super::operators::weighted_mass(problem, i, &h[i]).inner(grid, &h[i]) / mu[i];
        out[i] = 0.5 * alpha[i] * track + 0.5 * mu[i] * mass;
    }
    Ok(out)
}

/// Normalised directional derivatives of `J_i` at `h` along random `ĥ_i`.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    /// `|dJ_i(h; ĥ_i)| / (‖ĥ_i‖ ‖v‖)` per direction and follower.
    pub values: Vec<[f64; 2]>,
    pub max: f64,
}

pub fn check_nash_stationarity(
    problem: &HierarchicProblem,
    g: Option<&ControlProfile>,
    h: &[ControlProfile; 2],
    directions: usize,
    seed: u64,
) -> Result<StationarityReport> {
    let grid = problem.grid();
    let y = controlled_state(problem, g, h)?;
    let v = nash_rhs(problem, g)?;
    let vn = pair_norm(problem, &v);
    let scale = if vn > 0.0 { vn } else { 1.0 };
    let alpha = problem.alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = [
        super::operators::weighted_mass(problem, 0, &h[0]),
        super::operators::weighted_mass(problem, 1, &h[1]),
    ];
    let dev: Vec<TwoComponentState> = (0..2)
        .map(|i| {
            let mut d = y.clone();
            d.axpy(-1.0, problem.y_d(i));
            d
        })
        .collect();
    let mut values = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir = random_pair(problem, &mut rng);
        let mut row = [0.0; 2];
        for i in 0..2 {
            let lh = apply_lambda(problem, &dir[i])?;
            let track = dev[i].inner(grid, &lh, Integration::state().on(problem.od()))?;
            let form = mass[i].inner(grid, &dir[i]) + alpha[i] * track;
            row[i] = form.abs() / (dir[i].norm(grid) * scale);
        }
        values.push(row);
    }
    let max = values.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(StationarityReport { values, max })
}
