//! Command dispatch. Every command writes into one run directory and finishes
//! with a manifest, also when it fails.

use super::config::ProblemFile;
use super::output::{columns, config_hash, coordinate_columns, Column, RunDir, RunManifest, RunStatus, Versions};
use crate::analysis::{carleman_ratio_check, energy_constant_check, observability_ratio, EnergyEstimate};
use crate::error::{Error, Result};
use crate::leader::{run_hierarchic_control, variational_residual, verify_duality_identity, HumResult};
use crate::mesh::{Field, SpaceTimeGrid};
use crate::nash::{
    check_nash_stationarity, coercivity_tau, controlled_state, follower_costs, sample_coercivity, solve_nash_operator,
    solve_nash_optimality, write_controls_csv, ControlProfile,
};
use crate::pde::TwoComponentState;
use crate::problem::HierarchicProblem;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Forward solve with the prescribed controls.
    Simulate,
    /// Nash equilibrium by both routes, with stationarity and coercivity checks.
    Nash,
    /// Leader control by HUM for one or more penalties.
    Control,
    /// Observability ratios and energy constants of the dual system.
    Observability,
    /// Carleman ratios over a (lambda, s) grid.
    Carleman,
    /// Cartesian product of parameter lists, one run per cell.
    Sweep,
    /// Parse and validate only.
    Validate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Nash,
        Command::Control,
        Command::Observability,
        Command::Carleman,
        Command::Sweep,
        Command::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Nash => "nash",
            Command::Control => "control",
            Command::Observability => "observability",
            Command::Carleman => "carleman",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCommand(s.to_string()))
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub epsilon_ladder: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

/// Read `path`, run `command` and write the manifest under `opts.out`.
pub fn run_file(command: Command, path: &Path, opts: &RunOptions) -> RunManifest {
    let start = Instant::now();
    match super::config::read_problem(path) {
        Ok((pf, bytes)) => dispatch(command, &pf, &bytes, Some(&path.display().to_string()), opts),
        Err(e) => {
            let bytes = std::fs::read(path).unwrap_or_default();
            let m = failed_manifest(
                command,
                Some(path.display().to_string()),
                &bytes,
                opts.seed.unwrap_or(0),
                start,
                e,
            );
            if let Err(w) = m.write(&opts.out) {
                log::error!("could not write manifest: {w}");
            }
            m
        }
    }
}

fn failed_manifest(
    command: Command,
    problem: Option<String>,
    bytes: &[u8],
    seed: u64,
    start: Instant,
    e: Error,
) -> RunManifest {
    RunManifest {
        command: command.name().into(),
        problem,
        config_hash: config_hash(bytes),
        seed,
        outputs: Vec::new(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        versions: Versions::default(),
        status: RunStatus::Error,
        error: Some(e.to_string()),
        warnings: Vec::new(),
        details: serde_json::Value::Null,
    }
}

/// Run `command` on a parsed problem; `bytes` are the file contents the
/// configuration hash is computed from.
pub fn dispatch(
    command: Command,
    pf: &ProblemFile,
    bytes: &[u8],
    problem: Option<&str>,
    opts: &RunOptions,
) -> RunManifest {
    let pool = opts
        .jobs
        .map(|j| rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build());
    match pool {
        Some(Ok(pool)) => pool.install(|| dispatch_here(command, pf, bytes, problem, opts)),
        Some(Err(e)) => {
            let seed = opts.seed.unwrap_or(pf.seed);
            let m = failed_manifest(
                command,
                problem.map(String::from),
                bytes,
                seed,
                Instant::now(),
                Error::Validation(format!("thread pool: {e}")),
            );
            let _ = m.write(&opts.out);
            m
        }
        None => dispatch_here(command, pf, bytes, problem, opts),
    }
}

struct Ctx<'a> {
    pf: &'a ProblemFile,
    opts: &'a RunOptions,
    run: RunDir,
    seed: u64,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn samples(&self) -> usize {
        self.opts.samples.unwrap_or(self.pf.analysis.samples)
    }

    fn problem(&mut self) -> Result<(HierarchicProblem, [Field; 3])> {
        let (p, controls) = build_problem(self.pf)?;
        self.warnings.extend(p.warnings().iter().cloned());
        Ok((p, controls))
    }
}

/// Resolve a problem file into a validated problem and the prescribed controls.
pub fn build_problem(pf: &ProblemFile) -> Result<(HierarchicProblem, [Field; 3])> {
    let resolved = pf.resolve()?;
    let p = resolved.builder.build()?;
    if pf.coefficients.require_sign && !p.sign_certificate().holds {
        return Err(Error::Validation("a21 has no fixed sign on Od ∩ omega".into()));
    }
    Ok((p, resolved.controls))
}

fn require_observation(p: &HierarchicProblem) -> Result<()> {
    let r = p.regions();
    if r.omega.intersection(&r.od).is_none() {
        return Err(Error::Validation("Od does not intersect omega".into()));
    }
    Ok(())
}

fn dispatch_here(
    command: Command,
    pf: &ProblemFile,
    bytes: &[u8],
    problem: Option<&str>,
    opts: &RunOptions,
) -> RunManifest {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(pf.seed);
    let run = match RunDir::create(&opts.out) {
        Ok(r) => r,
        Err(e) => return failed_manifest(command, problem.map(String::from), bytes, seed, start, e),
    };
    let mut ctx = Ctx {
        pf,
        opts,
        run,
        seed,
        warnings: Vec::new(),
    };
    let outcome = match command {
        Command::Simulate => simulate(&mut ctx),
        Command::Nash => nash(&mut ctx),
        Command::Control => control(&mut ctx),
        Command::Observability => observability(&mut ctx),
        Command::Carleman => carleman(&mut ctx),
        Command::Sweep => sweep(&mut ctx),
        Command::Validate => validate(&mut ctx),
    };
    let schema = if command == Command::Validate {
        Ok(())
    } else {
        ctx.run.write_schema()
    };
    let (status, error, details) = match outcome.and_then(|d| schema.map(|_| d)) {
        Ok(d) => (RunStatus::Ok, None, d),
        Err(e) => (RunStatus::Error, Some(e.to_string()), serde_json::Value::Null),
    };
    let manifest = RunManifest {
        command: command.name().into(),
        problem: problem.map(String::from),
        config_hash: config_hash(bytes),
        seed,
        outputs: ctx.run.outputs().to_vec(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        versions: Versions::default(),
        status,
        error,
        warnings: ctx.warnings,
        details,
    };
    if let Err(e) = manifest.write(&opts.out) {
        log::error!("could not write manifest: {e}");
    }
    manifest
}

type Details = Result<serde_json::Value>;

fn validate(ctx: &mut Ctx<'_>) -> Details {
    let (p, _) = ctx.problem()?;
    let w = p.weights();
    Ok(json!({
        "nodes": p.grid().n_nodes(),
        "levels": p.grid().n_levels(),
        "mu": p.mu(),
        "mu_thresholds": p.mu_thresholds()?,
        "lambda": w.lambda(),
        "s": w.s(),
        "rho0": w.rho0(),
        "sign_certificate": p.sign_certificate(),
        "omega_prime": p.omega_prime().region(),
        "observation_overlap": p.regions().omega.intersection(&p.regions().od).is_some(),
    }))
}

fn prescribed(p: &HierarchicProblem, controls: &[Field; 3]) -> Result<(ControlProfile, [ControlProfile; 2])> {
    let g = p.grid();
    let lead = ControlProfile::from_field(g, controls[0].clone(), p.omega(), ControlProfile::leader_levels(g))?;
    let fl = ControlProfile::follower_levels(g);
    let h1 = ControlProfile::from_field(g, controls[1].clone(), p.omega_i(0), fl.clone())?;
    let h2 = ControlProfile::from_field(g, controls[2].clone(), p.omega_i(1), fl)?;
    Ok((lead, [h1, h2]))
}

fn state_columns(dim: usize) -> Vec<Column> {
    let mut c = coordinate_columns(dim);
    c.extend(columns(&[
        ("c1", "first state component"),
        ("c2", "second state component"),
    ]));
    c
}

fn control_columns(dim: usize, names: &[(&str, &str)]) -> Vec<Column> {
    let mut c = coordinate_columns(dim);
    c.extend(columns(names));
    c
}

fn write_state(run: &mut RunDir, grid: &SpaceTimeGrid, name: &str, what: &str, y: &TwoComponentState) -> Result<()> {
    run.csv(name, what, state_columns(grid.dim()), |w| y.write_csv(grid, w))
}

fn terminal_norm(grid: &SpaceTimeGrid, y: &TwoComponentState) -> f64 {
    crate::leader::pair_norm(grid, &y.level_pair(grid.n_t()))
}

fn simulate(ctx: &mut Ctx<'_>) -> Details {
    let (p, controls) = ctx.problem()?;
    let grid = p.grid();
    let (g, h) = prescribed(&p, &controls)?;
    let y = controlled_state(&p, Some(&g), &h)?;
    write_state(
        &mut ctx.run,
        grid,
        "trajectory.csv",
        "state driven by the prescribed controls",
        &y,
    )?;
    ctx.run.binary(
        "trajectory.bin",
        "binary dump of trajectory.csv: magic HCTRAJ01, u64 dim, n_x, n_levels, n_nodes, 2, f64 T, values [component][level][node], little endian",
        |w| y.write_binary(grid, w),
    )?;
    ctx.run.csv(
        "controls.csv",
        "prescribed controls restricted to their supports",
        control_columns(
            grid.dim(),
            &[
                ("g", "leader control on omega"),
                ("h1", "follower 1 control on omega1"),
                ("h2", "follower 2 control on omega2"),
            ],
        ),
        |w| write_controls_csv(grid, &["g", "h1", "h2"], &[&g, &h[0], &h[1]], w),
    )?;
    #[derive(Serialize)]
    struct Summary {
        terminal_norm: f64,
        max_abs: f64,
        leader_cost: f64,
        follower_costs: [f64; 2],
    }
    let s = Summary {
        terminal_norm: terminal_norm(grid, &y),
        max_abs: y.max_abs(),
        leader_cost: 0.5 * g.inner(grid, &g),
        follower_costs: follower_costs(&p, &y, &h)?,
    };
    ctx.run
        .json("simulate.json", "norms and costs of the simulated trajectory", &s)?;
    Ok(serde_json::to_value(&s)?)
}

fn pair_distance(grid: &SpaceTimeGrid, a: &[ControlProfile; 2], b: &[ControlProfile; 2]) -> (f64, f64) {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..2 {
        let mut d = a[i].clone();
        d.axpy(-1.0, &b[i]);
        diff += d.inner(grid, &d);
        norm += b[i].inner(grid, &b[i]);
    }
    (diff.sqrt(), norm.sqrt())
}

fn nash(ctx: &mut Ctx<'_>) -> Details {
    let (p, controls) = ctx.problem()?;
    let grid = p.grid();
    let (g, _) = prescribed(&p, &controls)?;
    let op = solve_nash_operator(&p, Some(&g))?;
    let opt = solve_nash_optimality(&p, Some(&g))?;
    let (diff, norm) = pair_distance(grid, &op.h, &opt.nash.h);
    let agreement = if norm > 0.0 { diff / norm } else { diff };
    let stationarity = check_nash_stationarity(&p, Some(&g), &opt.nash.h, ctx.pf.analysis.directions, ctx.seed)?;
    let coercivity = coercivity_tau(&p)?;
    let samples = sample_coercivity(&p, ctx.samples(), ctx.seed)?;
    let costs = follower_costs(&p, &opt.y, &opt.nash.h)?;
    let names = [
        ("h1", "follower 1 equilibrium control on omega1"),
        ("h2", "follower 2 equilibrium control on omega2"),
    ];
    for (file, sol, what) in [
        (
            "nash_operator.csv",
            &op.h,
            "equilibrium controls from the operator equation",
        ),
        (
            "nash_optimality.csv",
            &opt.nash.h,
            "equilibrium controls from the optimality system",
        ),
    ] {
        ctx.run.csv(file, what, control_columns(grid.dim(), &names), |w| {
            write_controls_csv(grid, &["h1", "h2"], &[&sol[0], &sol[1]], w)
        })?;
    }
    write_state(&mut ctx.run, grid, "nash_state.csv", "equilibrium state", &opt.y)?;
    let details = json!({
        "operator": {"residual": op.residual, "iterations": op.iterations},
        "optimality": {"residual": opt.nash.residual, "iterations": opt.nash.iterations, "coupled_residual": opt.coupled_residual, "backend": opt.backend},
        "route_agreement": agreement,
        "stationarity_max": stationarity.max,
        "follower_costs": costs,
        "coercivity": coercivity,
        "coercivity_min_quotient": samples.min_quotient,
        "coercivity_holds": samples.holds,
    });
    ctx.run.json(
        "nash.json",
        "Nash equilibrium diagnostics",
        &json!({"summary": details, "stationarity": stationarity, "coercivity_samples": samples}),
    )?;
    Ok(details)
}

/// Serialized outcome of one leader run.
#[derive(Debug, Clone, Serialize)]
pub struct HumReport {
    pub epsilon: f64,
    pub terminal_norm: f64,
    pub free_terminal_norm: f64,
    pub relative_terminal: f64,
    pub leader_cost: f64,
    pub follower_costs: [f64; 2],
    pub f_tilde: f64,
    pub cg_iterations: usize,
    pub converged: bool,
    pub nash_residual: f64,
    pub duality_residual: f64,
    pub variational_residual: f64,
    pub cg_residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// Minimiser `ψ̂^T`, nodal values per component.
    pub psi_t_hat: [Vec<f64>; 2],
}

impl HumReport {
    pub fn new(p: &HierarchicProblem, r: &HumResult, directions: usize, seed: u64) -> Result<Self> {
        let duality = verify_duality_identity(p, &r.g, &r.psi_t)?;
        Ok(Self {
            epsilon: r.epsilon,
            terminal_norm: r.terminal_norm,
            free_terminal_norm: r.free_terminal_norm,
            relative_terminal: if r.free_terminal_norm > 0.0 {
                r.terminal_norm / r.free_terminal_norm
            } else {
                0.0
            },
            leader_cost: r.leader_cost,
            follower_costs: r.follower_costs,
            f_tilde: r.f_tilde,
            cg_iterations: r.iterations,
            converged: r.converged,
            nash_residual: r.nash_residual,
            duality_residual: duality.relative_gap,
            variational_residual: variational_residual(p, r, directions, seed),
            cg_residual_history: r.residual_history.clone(),
            energy_history: r.energy_history.clone(),
            psi_t_hat: [r.psi_t[0].to_vec(), r.psi_t[1].to_vec()],
        })
    }
}

/// `1e-1` style tag for file names.
pub fn epsilon_tag(eps: f64) -> String {
    format!("{eps:e}")
}

fn control(ctx: &mut Ctx<'_>) -> Details {
    let (p, _) = ctx.problem()?;
    require_observation(&p)?;
    let grid = p.grid();
    let ladder = ctx
        .opts
        .epsilon_ladder
        .clone()
        .unwrap_or_else(|| ctx.pf.control.epsilon.clone());
    if ladder.is_empty() {
        return Err(Error::Validation("the epsilon ladder is empty".into()));
    }
    if let Some(e) = ladder.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Validation(format!("epsilon must be positive, got {e}")));
    }
    let directions = ctx.pf.control.directions;
    let seed = ctx.seed;
    let runs: Vec<(HumResult, HumReport)> = ladder
        .par_iter()
        .map(|&eps| -> Result<_> {
            let r = run_hierarchic_control(&p, eps)?;
            let rep = HumReport::new(&p, &r, directions, seed)?;
            Ok((r, rep))
        })
        .collect::<Result<_>>()?;
    for (r, rep) in &runs {
        let tag = epsilon_tag(r.epsilon);
        if !r.converged {
            ctx.warnings.push(format!("CG did not converge for epsilon = {tag}"));
        }
        ctx.run.json(
            &format!("hum_eps_{tag}.json"),
            "leader run: norms, costs, residuals and the minimiser",
            rep,
        )?;
        ctx.run.csv(
            &format!("controls_eps_{tag}.csv"),
            "leader control and follower equilibrium controls",
            control_columns(
                grid.dim(),
                &[
                    ("g", "leader control on omega"),
                    ("h1", "follower 1 control on omega1"),
                    ("h2", "follower 2 control on omega2"),
                ],
            ),
            |w| write_controls_csv(grid, &["g", "h1", "h2"], &[&r.g, &r.h[0], &r.h[1]], w),
        )?;
        write_state(
            &mut ctx.run,
            grid,
            &format!("state_eps_{tag}.csv"),
            "controlled equilibrium state",
            &r.y,
        )?;
    }
    let reports: Vec<&HumReport> = runs.iter().map(|(_, rep)| rep).collect();
    ctx.run.csv(
        "decay.csv",
        "terminal state against the penalty",
        columns(&[
            ("epsilon", "penalty"),
            ("terminal_norm", "discrete L2 norm of y(T)"),
            ("free_terminal_norm", "discrete L2 norm of y(T) with g = 0"),
            ("relative_terminal", "terminal_norm / free_terminal_norm"),
            ("leader_cost", "half the squared norm of g on omega x (0,T)"),
            ("follower_cost1", "cost of follower 1 at equilibrium"),
            ("follower_cost2", "cost of follower 2 at equilibrium"),
            ("f_tilde", "penalised dual functional at the minimiser"),
            ("cg_iterations", "conjugate gradient iterations"),
            ("duality_residual", "normalised gap of the duality identity at the minimiser"),
            ("variational_residual", "largest normalised residual of the optimality condition over random directions"),
        ]),
        |w| {
            writeln!(w, "epsilon,terminal_norm,free_terminal_norm,relative_terminal,leader_cost,follower_cost1,follower_cost2,f_tilde,cg_iterations,duality_residual,variational_residual")?;
            for r in &reports {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                    r.epsilon,
                    r.terminal_norm,
                    r.free_terminal_norm,
                    r.relative_terminal,
                    r.leader_cost,
                    r.follower_costs[0],
                    r.follower_costs[1],
                    r.f_tilde,
                    r.cg_iterations,
                    r.duality_residual,
                    r.variational_residual
                )?;
            }
            Ok(())
        },
    )?;
    let mut by_eps: Vec<&HumReport> = reports.clone();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let decreasing = by_eps.windows(2).all(|w| w[1].terminal_norm < w[0].terminal_norm);
    Ok(json!({
        "epsilon": ladder,
        "terminal_norm": reports.iter().map(|r| r.terminal_norm).collect::<Vec<_>>(),
        "free_terminal_norm": reports[0].free_terminal_norm,
        "strictly_decreasing": decreasing,
    }))
}

fn ratio_or_nan(r: Option<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn observability(ctx: &mut Ctx<'_>) -> Details {
    let (p, _) = ctx.problem()?;
    require_observation(&p)?;
    let grid = p.grid();
    let n = ctx.samples();
    let rep = observability_ratio(&p, n, p.settings().power_max_iter, ctx.seed)?;
    ctx.run.json(
        "observability.json",
        "observability ratio samples and power-iteration estimate",
        &rep,
    )?;
    let ratio_cols = [
        ("seed", "per-sample seed of the random terminal datum"),
        ("lhs", "left-hand side of the inequality"),
        ("rhs", "right-hand side of the inequality"),
        ("ratio", "lhs / rhs; NaN when both vanish"),
    ];
    ctx.run.csv(
        "observability_samples.csv",
        "sampled observability ratios",
        columns(&ratio_cols),
        |w| {
            writeln!(w, "seed,lhs,rhs,ratio")?;
            for s in &rep.samples {
                writeln!(
                    w,
                    "{},{:.16e},{:.16e},{:.16e}",
                    s.seed,
                    s.lhs,
                    s.rhs,
                    ratio_or_nan(s.ratio)
                )?;
            }
            Ok(())
        },
    )?;
    let mut cols: Vec<Column> = coordinate_columns(grid.dim()).into_iter().skip(1).collect();
    cols.extend(columns(&[
        ("psi1", "first component of the maximising terminal datum"),
        ("psi2", "second component"),
    ]));
    ctx.run.csv(
        "observability_maximizer.csv",
        "terminal datum attaining the power-iteration estimate",
        cols,
        |w| {
            write!(w, "x")?;
            if grid.dim() == 2 {
                write!(w, ",y")?;
            }
            writeln!(w, ",psi1,psi2")?;
            for j in 0..grid.n_nodes() {
                let x = grid.coords(j);
                write!(w, "{:.16e}", x[0])?;
                if grid.dim() == 2 {
                    write!(w, ",{:.16e}", x[1])?;
                }
                writeln!(w, ",{:.16e},{:.16e}", rep.maximizer[0][j], rep.maximizer[1][j])?;
            }
            Ok(())
        },
    )?;
    let energy: Vec<_> = [EnergyEstimate::ThetaQ, EnergyEstimate::ThetaHalf, EnergyEstimate::Gamma]
        .into_iter()
        .map(|e| energy_constant_check(&p, e, n, ctx.seed))
        .collect::<Result<_>>()?;
    ctx.run.json(
        "energy.json",
        "empirical constants of the energy estimates of the dual system",
        &energy,
    )?;
    let mut cols = vec![Column {
        name: "estimate".into(),
        description: "theta_q, theta_half or gamma".into(),
    }];
    cols.extend(columns(&ratio_cols));
    ctx.run
        .csv("energy_samples.csv", "sampled energy-estimate ratios", cols, |w| {
            writeln!(w, "estimate,seed,lhs,rhs,ratio")?;
            for rep in &energy {
                let name = serde_json::to_value(rep.which).map_err(std::io::Error::other)?;
                let name = name.as_str().unwrap_or_default().to_string();
                for s in &rep.samples {
                    writeln!(
                        w,
                        "{name},{},{:.16e},{:.16e},{:.16e}",
                        s.seed,
                        s.lhs,
                        s.rhs,
                        ratio_or_nan(s.ratio)
                    )?;
                }
            }
            Ok(())
        })?;
    Ok(json!({
        "sample_max": rep.sample_max,
        "all_finite": rep.all_finite,
        "power_estimate": rep.power_estimate,
        "power_converged": rep.power_converged,
        "energy_constants": energy.iter().map(|e| (e.which, e.constant)).collect::<Vec<_>>(),
    }))
}

fn carleman(ctx: &mut Ctx<'_>) -> Details {
    let pf = ctx.pf;
    let lambdas = if pf.analysis.carleman_lambda.is_empty() {
        vec![pf.weights.lambda]
    } else {
        pf.analysis.carleman_lambda.clone()
    };
    let ss = if pf.analysis.carleman_s.is_empty() {
        vec![pf.weights.s]
    } else {
        pf.analysis.carleman_s.clone()
    };
    let n = ctx.samples();
    let mut reports = Vec::new();
    for &lambda in &lambdas {
        for &s in &ss {
            let mut cell = pf.clone();
            cell.weights.lambda = lambda;
            cell.weights.s = s;
            let (p, _) = build_problem(&cell)?;
            for w in p.warnings() {
                if !ctx.warnings.contains(w) {
                    ctx.warnings.push(w.clone());
                }
            }
            reports.push(carleman_ratio_check(&p, n, ctx.seed)?);
        }
    }
    ctx.run
        .json("carleman.json", "Carleman ratio samples per (lambda, s) cell", &reports)?;
    ctx.run.csv(
        "carleman.csv",
        "Carleman ratio summary per (lambda, s) cell",
        columns(&[
            ("lambda", "weight parameter lambda"),
            ("s", "weight parameter s"),
            ("samples", "number of random terminal data"),
            ("all_finite", "1 when every ratio is finite, else 0"),
            ("min_ratio", "smallest finite ratio"),
            ("median_ratio", "median finite ratio"),
            ("max_ratio", "largest finite ratio"),
        ]),
        |w| {
            writeln!(w, "lambda,s,samples,all_finite,min_ratio,median_ratio,max_ratio")?;
            for r in &reports {
                let d = &r.distribution;
                writeln!(
                    w,
                    "{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e}",
                    r.lambda,
                    r.s,
                    r.samples.len(),
                    r.all_finite as u8,
                    d.min,
                    d.median,
                    r.max_ratio
                )?;
            }
            Ok(())
        },
    )?;
    let mut cols = columns(&[
        ("lambda", "weight parameter lambda"),
        ("s", "weight parameter s"),
        ("seed", "per-sample seed of the random terminal datum"),
        ("lhs", "weighted functional summed over the dual components"),
        ("rhs", "localised observation term"),
        ("ratio", "lhs / rhs; NaN when both vanish"),
    ]);
    let term_names = [
        "term_zero_order",
        "term_gradient",
        "term_hessian",
        "term_laplacian",
        "term_grad_laplacian",
        "term_time_bilaplacian",
    ];
    let term_docs = [
        "lambda^8 (s tau)^6 |u|^2 part",
        "lambda^6 (s tau)^4 |grad u|^2 part",
        "lambda^4 (s tau)^3 |D^2 u|^2 part",
        "lambda^4 (s tau)^2 |Laplacian u|^2 part",
        "lambda^2 s tau |grad Laplacian u|^2 part",
        "(s tau)^-1 (|u_t|^2 + |bilaplacian u|^2) part",
    ];
    cols.extend(term_names.iter().zip(term_docs).map(|(n, d)| Column {
        name: n.to_string(),
        description: d.to_string(),
    }));
    ctx.run.csv(
        "carleman_samples.csv",
        "sampled Carleman ratios with the left-hand side broken down",
        cols,
        |w| {
            writeln!(w, "lambda,s,seed,lhs,rhs,ratio,{}", term_names.join(","))?;
            for r in &reports {
                for s in &r.samples {
                    write!(
                        w,
                        "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}",
                        r.lambda,
                        r.s,
                        s.seed,
                        s.lhs,
                        s.rhs,
                        ratio_or_nan(s.ratio)
                    )?;
                    for t in s.breakdown.terms {
                        write!(w, ",{t:.16e}")?;
                    }
                    writeln!(w)?;
                }
            }
            Ok(())
        },
    )?;
    Ok(json!({
        "cells": reports.iter().map(|r| json!({"lambda": r.lambda, "s": r.s, "max_ratio": r.max_ratio, "all_finite": r.all_finite})).collect::<Vec<_>>(),
    }))
}

fn sweep(ctx: &mut Ctx<'_>) -> Details {
    let pf = ctx.pf;
    let cell_command = Command::from_str(&pf.sweep.command)?;
    if cell_command == Command::Sweep {
        return Err(Error::Validation("sweep cells cannot themselves be sweeps".into()));
    }
    if pf.sweep.parameters.is_empty() {
        return Err(Error::Validation("sweep.parameters is empty".into()));
    }
    let keys: Vec<&String> = pf.sweep.parameters.keys().collect();
    // cartesian product, last key fastest
    let mut cells: Vec<Vec<f64>> = vec![Vec::new()];
    for k in &keys {
        let values = &pf.sweep.parameters[*k];
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(*v);
                    c
                })
            })
            .collect();
    }
    let width = cells.len().to_string().len().max(3);
    let root = ctx.run.root().to_path_buf();
    let ladder_swept = pf.sweep.parameters.contains_key("epsilon");
    let outcomes: Vec<(String, RunManifest)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, values)| {
            let name = format!("cell_{i:0width$}");
            let dir = root.join(&name);
            let start = Instant::now();
            let prepared = (|| -> Result<(ProblemFile, Vec<u8>)> {
                let mut cell = pf.clone();
                for (k, v) in keys.iter().zip(values) {
                    cell.set_parameter(k, *v)?;
                }
                cell.sweep = Default::default();
                let bytes = serde_json::to_vec_pretty(&cell)?;
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("problem.json"), &bytes)?;
                Ok((cell, bytes))
            })();
            let manifest = match prepared {
                Ok((cell, bytes)) => {
                    let opts = RunOptions {
                        out: dir.clone(),
                        epsilon_ladder: if ladder_swept {
                            None
                        } else {
                            ctx.opts.epsilon_ladder.clone()
                        },
                        samples: ctx.opts.samples,
                        jobs: None,
                        seed: Some(ctx.seed),
                    };
                    dispatch_here(cell_command, &cell, &bytes, Some("problem.json"), &opts)
                }
                Err(e) => {
                    let m = failed_manifest(cell_command, None, &[], ctx.seed, start, e);
                    let _ = m.write(&dir);
                    m
                }
            };
            (name, manifest)
        })
        .collect();
    for (name, _) in &outcomes {
        ctx.run.record(
            &format!("{name}/"),
            "sweep cell run directory with its own manifest.json and problem.json",
        );
    }
    let mut cols = columns(&[("cell", "cell directory name")]);
    cols.extend(keys.iter().map(|k| Column {
        name: k.to_string(),
        description: format!("value of sweep parameter {k}"),
    }));
    cols.extend(columns(&[("status", "ok or error, see the cell manifest")]));
    ctx.run.csv("sweep.csv", "index of sweep cells", cols, |w| {
        write!(w, "cell")?;
        for k in &keys {
            write!(w, ",{k}")?;
        }
        writeln!(w, ",status")?;
        for ((name, m), values) in outcomes.iter().zip(&cells) {
            write!(w, "{name}")?;
            for v in values {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w, ",{}", if m.status == RunStatus::Ok { "ok" } else { "error" })?;
        }
        Ok(())
    })?;
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|(_, m)| m.status != RunStatus::Ok)
        .map(|(n, _)| n.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Error::Validation(format!(
            "{} of {} sweep cells failed: {}",
            failed.len(),
            outcomes.len(),
            failed.join(", ")
        )));
    }
    Ok(json!({"command": cell_command.name(), "cells": outcomes.len(), "parameters": keys}))
}
