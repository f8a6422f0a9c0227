//! Problem files: a declarative JSON description of one hierarchic control
//! problem plus the options of every command.
//!
//! Every section is optional; an empty object `{}` describes the 1-D desk
//! benchmark (see [`crate::problem::benchmark_1d`]).

use super::expr::Expr;
use crate::error::{Error, Result};
use crate::mesh::{BoxDomain, Field, Region, SpaceTimeGrid};
use crate::pde::{Backend, CoefficientField, CoupledOptions, Orientation, TwoComponentState};
use crate::problem::{MuChoice, ProblemBuilder, Regions, SChoice, SolverSettings};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// A number or an expression over `x`, `y`, `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expression(String),
}

impl Scalar {
    fn compile(&self, what: &str) -> Result<Expr> {
        match self {
            Scalar::Number(v) => Ok(Expr::constant(*v)),
            Scalar::Expression(s) => Expr::parse(s).map_err(|e| Error::Validation(format!("{what}: {e}"))),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Expression(s.to_string())
    }
}

/// Two-component data: `"zero"` or `[c1, c2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairData {
    Keyword(String),
    Components([Scalar; 2]),
}

impl PairData {
    fn compile(&self, what: &str) -> Result<[Expr; 2]> {
        match self {
            PairData::Keyword(k) if k == "zero" => Ok([Expr::constant(0.0), Expr::constant(0.0)]),
            PairData::Keyword(k) => Err(Error::Validation(format!(
                "{what}: expected \"zero\" or [c1, c2], got \"{k}\""
            ))),
            PairData::Components([a, b]) => Ok([a.compile(&format!("{what}[0]"))?, b.compile(&format!("{what}[1]"))?]),
        }
    }
}

/// A number or the keyword `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

impl AutoOr {
    pub const AUTO: AutoOr = AutoOr::Keyword(AutoKeyword::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            AutoOr::Value(v) => Some(v),
            AutoOr::Keyword(_) => None,
        }
    }
}

/// An interval `[lo, hi]` (1-D) or a box `[[x_lo, x_hi], [y_lo, y_hi]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Interval([f64; 2]),
    Box(Vec<[f64; 2]>),
}

impl RegionSpec {
    fn to_region(&self) -> Region {
        match self {
            RegionSpec::Interval(i) => Region { intervals: vec![*i] },
            RegionSpec::Box(b) => Region { intervals: b.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dim: usize,
    pub n_x: usize,
    pub n_t: usize,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
    /// Defaults to the unit box.
    pub domain: Option<BoxDomain>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dim: 1,
            n_x: 31,
            n_t: 40,
            horizon: 1.0,
            domain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsSpec {
    pub omega: RegionSpec,
    pub omega1: RegionSpec,
    pub omega2: RegionSpec,
    #[serde(rename = "Od", alias = "od")]
    pub od: RegionSpec,
    pub omega_prime: Option<RegionSpec>,
}

impl Default for RegionsSpec {
    fn default() -> Self {
        Self {
            omega: RegionSpec::Interval([0.3, 0.7]),
            omega1: RegionSpec::Interval([0.05, 0.2]),
            omega2: RegionSpec::Interval([0.8, 0.95]),
            od: RegionSpec::Interval([0.25, 0.75]),
            omega_prime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsSpec {
    pub a11: Scalar,
    pub a12: Scalar,
    pub a21: Scalar,
    pub a22: Scalar,
    /// Reject the problem unless `a21` has a fixed sign on `O_d ∩ ω`.
    pub require_sign: bool,
}

impl Default for CoefficientsSpec {
    fn default() -> Self {
        Self {
            a11: 0.5.into(),
            a12: 0.2.into(),
            a21: 1.0.into(),
            a22: 0.5.into(),
            require_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionalsSpec {
    pub alpha: [f64; 2],
    pub mu: [AutoOr; 2],
}

impl Default for FunctionalsSpec {
    fn default() -> Self {
        Self {
            alpha: [1.0, 1.0],
            mu: [AutoOr::AUTO, AutoOr::AUTO],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsSpec {
    pub y_d1: PairData,
    pub y_d2: PairData,
}

impl Default for TargetsSpec {
    fn default() -> Self {
        Self {
            y_d1: PairData::Components(["0.3*sin(pi*x)".into(), 0.0.into()]),
            y_d2: PairData::Components([0.1.into(), (-0.1).into()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSpec {
    pub lambda: f64,
    pub s: AutoOr,
    /// Target value of `η` on the boundary.
    pub c0: f64,
}

impl Default for WeightsSpec {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            s: AutoOr::AUTO,
            c0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub backend: Backend,
    pub coupled_tol: f64,
    pub coupled_max_iter: usize,
    pub relaxation: f64,
    pub memory_budget_mb: usize,
    pub nash_tol: f64,
    pub nash_max_iter: usize,
    pub gmres_restart: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub mu_factor: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            backend: s.coupled.backend,
            coupled_tol: s.coupled.tol,
            coupled_max_iter: s.coupled.max_iter,
            relaxation: s.coupled.relaxation,
            memory_budget_mb: s.coupled.memory_budget >> 20,
            nash_tol: s.nash_tol,
            nash_max_iter: s.nash_max_iter,
            gmres_restart: s.gmres_restart,
            cg_tol: s.cg_tol,
            cg_max_iter: s.cg_max_iter,
            power_tol: s.power_tol,
            power_max_iter: s.power_max_iter,
            mu_factor: s.mu_factor,
        }
    }
}

impl SolverSpec {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            coupled: CoupledOptions {
                backend: self.backend,
                tol: self.coupled_tol,
                max_iter: self.coupled_max_iter,
                relaxation: self.relaxation,
                memory_budget: self.memory_budget_mb << 20,
            },
            nash_tol: self.nash_tol,
            nash_max_iter: self.nash_max_iter,
            gmres_restart: self.gmres_restart,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            power_tol: self.power_tol,
            power_max_iter: self.power_max_iter,
            mu_factor: self.mu_factor,
        }
    }
}

/// Prescribed controls for `simulate` (all three) and `nash` (leader only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlsSpec {
    pub g: Scalar,
    pub h1: Scalar,
    pub h2: Scalar,
}

impl Default for ControlsSpec {
    fn default() -> Self {
        Self {
            g: 0.0.into(),
            h1: 0.0.into(),
            h2: 0.0.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlCommandSpec {
    /// Penalties; overridden by `--epsilon-ladder`.
    pub epsilon: Vec<f64>,
    /// Random directions for the variational residual.
    pub directions: usize,
}

impl Default for ControlCommandSpec {
    fn default() -> Self {
        Self {
            epsilon: vec![1e-1, 1e-3, 1e-5],
            directions: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    /// Random samples per check; overridden by `--samples`.
    pub samples: usize,
    /// Random directions for the Nash stationarity check.
    pub directions: usize,
    /// `λ` values of the Carleman grid (defaults to `weights.lambda`).
    pub carleman_lambda: Vec<f64>,
    /// `s` values of the Carleman grid (defaults to `weights.s`).
    pub carleman_s: Vec<AutoOr>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            samples: 50,
            directions: 20,
            carleman_lambda: Vec::new(),
            carleman_s: Vec::new(),
        }
    }
}

/// Cartesian product of parameter lists, each cell run with `command`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub command: String,
    pub parameters: BTreeMap<String, Vec<f64>>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            command: "control".into(),
            parameters: BTreeMap::new(),
        }
    }
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMETERS: &[&str] = &[
    "lambda", "s", "alpha1", "alpha2", "mu1", "mu2", "epsilon", "n_x", "n_t", "a11", "a12", "a21", "a22",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemFile {
    pub grid: GridSpec,
    pub regions: RegionsSpec,
    pub coefficients: CoefficientsSpec,
    pub functionals: FunctionalsSpec,
    pub targets: TargetsSpec,
    /// Initial data `y⁰`; expressions over `x`, `y`.
    pub initial: PairData,
    pub weights: WeightsSpec,
    pub solver: SolverSpec,
    pub controls: ControlsSpec,
    pub control: ControlCommandSpec,
    pub analysis: AnalysisSpec,
    pub sweep: SweepSpec,
    pub seed: u64,
}

impl Default for PairData {
    fn default() -> Self {
        PairData::Components(["sin(pi*x)".into(), "0.5*sin(2*pi*x)".into()])
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Read and parse a problem file; returns the file bytes too (for hashing).
pub fn read_problem(path: &Path) -> Result<(ProblemFile, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let pf = parse_problem_bytes(&bytes)?;
    Ok((pf, bytes))
}

pub fn parse_problem_bytes(bytes: &[u8]) -> Result<ProblemFile> {
    let pf: ProblemFile = serde_json::from_slice(bytes).map_err(parse_error)?;
    pf.check()?;
    Ok(pf)
}

pub fn parse_problem_str(text: &str) -> Result<ProblemFile> {
    parse_problem_bytes(text.as_bytes())
}

/// Checked, sampled problem data.
pub struct Resolved {
    pub builder: ProblemBuilder,
    pub controls: [Field; 3],
}

impl ProblemFile {
    /// Structural checks that need no grid.
    fn check(&self) -> Result<()> {
        for (i, e) in self.control.epsilon.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                return Err(Error::Validation(format!(
                    "control.epsilon[{i}] must be positive, got {e}"
                )));
            }
        }
        for (i, m) in self.functionals.mu.iter().enumerate() {
            if let Some(v) = m.value() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Validation(format!("mu{} must be positive, got {v}", i + 1)));
                }
            }
        }
        if !(self.weights.lambda > 0.0 && self.weights.lambda.is_finite()) {
            return Err(Error::Validation(format!(
                "lambda must be positive, got {}",
                self.weights.lambda
            )));
        }
        for key in self.sweep.parameters.keys() {
            if !SWEEP_PARAMETERS.contains(&key.as_str()) {
                return Err(Error::Validation(format!(
                    "unknown sweep parameter '{key}' (expected one of {})",
                    SWEEP_PARAMETERS.join(", ")
                )));
            }
        }
        for (key, values) in &self.sweep.parameters {
            if values.is_empty() {
                return Err(Error::Validation(format!("sweep parameter '{key}' has no values")));
            }
        }
        let dim = self.grid.dim;
        let regions = [
            ("omega", Some(&self.regions.omega)),
            ("omega1", Some(&self.regions.omega1)),
            ("omega2", Some(&self.regions.omega2)),
            ("Od", Some(&self.regions.od)),
            ("omega_prime", self.regions.omega_prime.as_ref()),
        ];
        for (name, r) in regions {
            if let Some(r) = r {
                if r.to_region().dim() != dim {
                    return Err(Error::Validation(format!(
                        "region {name} has dimension {} but the grid has {dim}",
                        r.to_region().dim()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let g = &self.grid;
        let domain = g.domain.clone().unwrap_or_else(|| BoxDomain::unit(g.dim));
        SpaceTimeGrid::new(g.dim, g.n_x, g.n_t, g.horizon, domain)
    }

    pub fn regions(&self) -> Regions {
        let r = &self.regions;
        Regions {
            omega: r.omega.to_region(),
            omega1: r.omega1.to_region(),
            omega2: r.omega2.to_region(),
            od: r.od.to_region(),
            omega_prime: r.omega_prime.as_ref().map(RegionSpec::to_region),
        }
    }

    /// Sample every expression on the grid and assemble a builder.
    pub fn resolve(&self) -> Result<Resolved> {
        let grid = self.grid()?;
        let sample = |e: &Expr, what: &str| -> Result<Field> {
            let f = Field::from_fn(&grid, |k, j| {
                let p = grid.coords(j);
                e.eval(p[0], p[1], grid.time(k))
            });
            if !f.is_finite() {
                return Err(Error::Validation(format!("{what} = '{e}' is not finite on every node")));
            }
            Ok(f)
        };
        let c = &self.coefficients;
        let a = [
            [
                sample(&c.a11.compile("a11")?, "a11")?,
                sample(&c.a12.compile("a12")?, "a12")?,
            ],
            [
                sample(&c.a21.compile("a21")?, "a21")?,
                sample(&c.a22.compile("a22")?, "a22")?,
            ],
        ];
        let coeffs = CoefficientField::from_fields(&grid, a)?;
        let target = |d: &PairData, what: &str| -> Result<TwoComponentState> {
            let [e1, e2] = d.compile(what)?;
            Ok(TwoComponentState::new(
                sample(&e1, &format!("{what}[0]"))?,
                sample(&e2, &format!("{what}[1]"))?,
                Orientation::Forward,
            ))
        };
        let y_d = [target(&self.targets.y_d1, "y_d1")?, target(&self.targets.y_d2, "y_d2")?];
        let init = target(&self.initial, "initial")?;
        let y0 = [init.c1.level(0).to_owned(), init.c2.level(0).to_owned()];
        let mu = self.functionals.mu.map(|m| match m.value() {
            Some(v) => MuChoice::Value(v),
            None => MuChoice::Auto,
        });
        let s = match self.weights.s.value() {
            Some(v) => SChoice::Value(v),
            None => SChoice::Auto,
        };
        let ctl = &self.controls;
        let controls = [
            sample(&ctl.g.compile("controls.g")?, "controls.g")?,
            sample(&ctl.h1.compile("controls.h1")?, "controls.h1")?,
            sample(&ctl.h2.compile("controls.h2")?, "controls.h2")?,
        ];
        let builder = ProblemBuilder {
            regions: self.regions(),
            coeffs,
            alpha: self.functionals.alpha,
            mu,
            y_d,
            y0,
            lambda: self.weights.lambda,
            s,
            c0_target: self.weights.c0,
            settings: self.solver.settings(),
            grid,
        };
        Ok(Resolved { builder, controls })
    }

    /// Apply one sweep override.
    pub fn set_parameter(&mut self, key: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Validation(format!(
                    "{key} must be a non-negative integer, got {v}"
                )))
            }
        };
        match key {
            "lambda" => self.weights.lambda = value,
            "s" => self.weights.s = AutoOr::Value(value),
            "alpha1" => self.functionals.alpha[0] = value,
            "alpha2" => self.functionals.alpha[1] = value,
            "mu1" => self.functionals.mu[0] = AutoOr::Value(value),
            "mu2" => self.functionals.mu[1] = AutoOr::Value(value),
            "epsilon" => self.control.epsilon = vec![value],
            "n_x" => self.grid.n_x = as_count(value)?,
            "n_t" => self.grid.n_t = as_count(value)?,
            "a11" => self.coefficients.a11 = value.into(),
            "a12" => self.coefficients.a12 = value.into(),
            "a21" => self.coefficients.a21 = value.into(),
            "a22" => self.coefficients.a22 = value.into(),
            other => return Err(Error::Validation(format!("unknown sweep parameter '{other}'"))),
        }
        self.check()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::benchmark_1d;

    #[test]
    fn empty_file_is_the_benchmark() {
        let pf = parse_problem_str("{}").unwrap();
        let b = pf.resolve().unwrap().builder;
        let reference = benchmark_1d();
        assert_eq!(b.grid, reference.grid);
        assert_eq!(b.regions, reference.regions);
        assert_eq!(b.alpha, reference.alpha);
        assert_eq!(b.mu, reference.mu);
        assert_eq!(b.lambda, reference.lambda);
        assert_eq!(b.s, reference.s);
        for c in 0..2 {
            assert!((&b.y0[c] - &reference.y0[c]).iter().all(|d| d.abs() <= 1e-15));
            for i in 0..2 {
                assert!(b.y_d[i].component(c).max_abs_diff(reference.y_d[i].component(c)) <= 1e-15);
            }
            for d in 0..2 {
                assert!(b.coeffs.entry(c, d).max_abs_diff(reference.coeffs.entry(c, d)) == 0.0);
            }
        }
        assert!(pf.resolve().unwrap().controls.iter().all(Field::is_zero));
    }

    #[test]
    fn syntax_errors_report_line_and_column() {
        let text = "{\n  \"grid\": {\"n_x\": 11,}\n}";
        match parse_problem_str(text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
        match parse_problem_str("{\"grid\": {\"nx\": 11}}") {
            Err(Error::Parse { line: 1, message, .. }) => assert!(message.contains("nx"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlap_is_a_named_validation_error() {
        let pf = parse_problem_str(r#"{"regions": {"omega1": [0.25, 0.35]}}"#).unwrap();
        let err = pf.resolve().unwrap().builder.build().unwrap_err().to_string();
        assert!(err.contains("omega1 intersects omega"), "{err}");
    }

    #[test]
    fn expressions_are_sampled_and_checked() {
        let pf = parse_problem_str(r#"{"coefficients": {"a21": "1.0", "a12": "x*t"}, "grid": {"n_x": 9, "n_t": 4}}"#)
            .unwrap();
        let b = pf.resolve().unwrap().builder;
        let g = &b.grid;
        let a12 = b.coeffs.entry(0, 1);
        assert_eq!(a12.get(2, 3), g.coords(3)[0] * g.time(2));
        let p = b.build().unwrap();
        let cert = p.sign_certificate();
        assert!(cert.holds);
        assert_eq!(cert.a0, 1.0);

        let pf = parse_problem_str(r#"{"initial": ["1/(x-x)", 0]}"#).unwrap();
        let err = pf.resolve().err().unwrap().to_string();
        assert!(err.contains("initial[0]"), "{err}");
        let pf = parse_problem_str(r#"{"targets": {"y_d1": ["sin(", 0]}}"#).unwrap();
        assert!(pf.resolve().is_err());
        assert!(parse_problem_str(r#"{"functionals": {"mu": ["auto", -1]}}"#).is_err());
        assert!(parse_problem_str(r#"{"functionals": {"mu": ["often", 1]}}"#).is_err());
    }

    #[test]
    fn sweep_overrides() {
        let mut pf = ProblemFile::default();
        pf.set_parameter("n_x", 15.0).unwrap();
        pf.set_parameter("mu1", 2.0).unwrap();
        assert_eq!(pf.grid.n_x, 15);
        assert_eq!(pf.functionals.mu[0], AutoOr::Value(2.0));
        assert!(pf.set_parameter("n_t", 2.5).is_err());
        assert!(pf.set_parameter("beta", 1.0).is_err());
        let text = serde_json::to_string(&pf).unwrap();
        assert_eq!(parse_problem_str(&text).unwrap(), pf);
    }
}
