//! Problem data shared by the Nash, leader and analysis modules.

use crate::error::{Error, Result};
use crate::mesh::{check_disjoint, sample_nodes, Field, Region, RegionLabel, RegionMask, SpaceTimeGrid};
use crate::pde::{
    BlockRef, CoefficientField, CoupledOperator, CoupledOptions, Coupling, Orientation, Propagator, SignCertificate,
    TwoComponentState,
};
use crate::weights::{auto_s, build_eta, CarlemanParams, CarlemanWeights, EtaFunction};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub omega: Region,
    pub omega1: Region,
    pub omega2: Region,
    pub od: Region,
    /// Defaults to the middle half of `ω ∩ O_d` (of `ω` when they are disjoint).
    pub omega_prime: Option<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuChoice {
    Value(f64),
    /// `mu_factor ×` the coercivity threshold.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SChoice {
    Value(f64),
    /// Largest representable choice, see [`auto_s`].
    Auto,
}

/// Tolerances and iteration caps for every iterative stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    pub coupled: CoupledOptions,
    pub nash_tol: f64,
    pub nash_max_iter: usize,
    pub gmres_restart: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub mu_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            coupled: CoupledOptions::default(),
            nash_tol: 1e-10,
            nash_max_iter: 1000,
            gmres_restart: 80,
            cg_tol: 1e-12,
            cg_max_iter: 2000,
            power_tol: 1e-10,
            power_max_iter: 2000,
            mu_factor: 2.0,
        }
    }
}

/// Everything needed to build a [`HierarchicProblem`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    pub grid: SpaceTimeGrid,
    pub regions: Regions,
    pub coeffs: CoefficientField,
    pub alpha: [f64; 2],
    pub mu: [MuChoice; 2],
    /// Targets `y_d^i`; only their values on `O_d` matter.
    pub y_d: [TwoComponentState; 2],
    pub y0: [Array1<f64>; 2],
    pub lambda: f64,
    pub s: SChoice,
    pub c0_target: f64,
    pub settings: SolverSettings,
}

/// Validated problem with weights, masks and cached solver structures.
#[derive(Debug)]
pub struct HierarchicProblem {
    builder: ProblemBuilder,
    omega: RegionMask,
    omega1: RegionMask,
    omega2: RegionMask,
    od: RegionMask,
    omega_prime: RegionMask,
    mu: [f64; 2],
    lambda_norms: OnceLock<[f64; 2]>,
    eta: EtaFunction,
    weights: CarlemanWeights,
    propagator: Arc<Propagator>,
    warnings: Vec<String>,
    optimality_op: OnceLock<CoupledOperator>,
    dual_op: OnceLock<CoupledOperator>,
}

fn middle_half(r: &Region) -> Region {
    r.shrunk(0.5)
}

impl ProblemBuilder {
    pub fn build(self) -> Result<HierarchicProblem> {
        let g = &self.grid;
        let mut warnings = Vec::new();
        for (i, a) in self.alpha.iter().enumerate() {
            if !(*a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "alpha{} must be non-negative, got {a}",
                    i + 1
                )));
            }
        }
        for (i, m) in self.mu.iter().enumerate() {
            if let MuChoice::Value(v) = m {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "mu{} must be positive, got {v}",
                        i + 1
                    )));
                }
            }
        }
        for (i, y) in self.y_d.iter().enumerate() {
            if y.n_levels() != g.n_levels() || y.n_nodes() != g.n_nodes() {
                return Err(Error::GridMismatch(format!("target y_d{} shape", i + 1)));
            }
            if !y.is_finite() {
                return Err(Error::NonFinite("target"));
            }
        }
        if self.y0.iter().any(|a| a.len() != g.n_nodes()) {
            return Err(Error::GridMismatch("initial data length".into()));
        }
        if !self.y0.iter().all(|a| a.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("initial data"));
        }
        let r = &self.regions;
        let omega = RegionMask::new(g, &r.omega, RegionLabel::Omega)?;
        let omega1 = RegionMask::new(g, &r.omega1, RegionLabel::Omega1)?;
        let omega2 = RegionMask::new(g, &r.omega2, RegionLabel::Omega2)?;
        let od = RegionMask::new(g, &r.od, RegionLabel::Od)?;
        check_disjoint(&omega1, &omega)?;
        check_disjoint(&omega2, &omega)?;
        let overlap = r.omega.intersection(&r.od);
        if overlap.is_none() {
            warnings
                .push("Od does not intersect omega; the observability and control results carry no guarantee".into());
        }
        let op_region = match &r.omega_prime {
            Some(p) => {
                if !p.closure_inside(&r.omega) {
                    return Err(Error::Validation("closure of omega_prime is not inside omega".into()));
                }
                p.clone()
            }
            None => middle_half(overlap.as_ref().unwrap_or(&r.omega)),
        };
        let omega_prime = RegionMask::new(g, &op_region, RegionLabel::OmegaPrime)?;
        let cert = self.coeffs.sign_certificate(&match overlap {
            Some(ref o) => RegionMask::new(g, o, RegionLabel::Custom).unwrap_or_else(|_| od.clone()),
            None => od.clone(),
        });
        if !cert.holds {
            warnings.push("a21 has no fixed sign on Od ∩ omega; the Carleman estimate is not guaranteed".into());
        }
        let eta = build_eta(g, &omega_prime, self.c0_target)?;
        let s = match self.s {
            SChoice::Value(v) => v,
            SChoice::Auto => auto_s(g, self.lambda),
        };
        let weights = CarlemanWeights::build(g, &eta, CarlemanParams { lambda: self.lambda, s })?;
        let propagator = Arc::new(Propagator::new(g, self.coeffs.clone())?);
        let mu = self.mu.map(|m| match m {
            MuChoice::Value(v) => v,
            MuChoice::Auto => f64::NAN,
        });
        let mut problem = HierarchicProblem {
            builder: self,
            omega,
            omega1,
            omega2,
            od,
            omega_prime,
            mu,
            lambda_norms: OnceLock::new(),
            eta,
            weights,
            propagator,
            warnings,
            optimality_op: OnceLock::new(),
            dual_op: OnceLock::new(),
        };
        let thresholds =
            if problem.builder.mu.contains(&MuChoice::Auto) || problem.builder.alpha.iter().any(|a| *a > 0.0) {
                Some(problem.mu_thresholds()?)
            } else {
                None
            };
        if let Some(th) = thresholds {
            for i in 0..2 {
                if problem.builder.mu[i] == MuChoice::Auto {
                    let floor = f64::MIN_POSITIVE.sqrt();
                    problem.mu[i] = (problem.builder.settings.mu_factor * th[i]).max(floor);
                } else if problem.mu[i] <= th[i] {
                    problem.warnings.push(format!(
                        "mu{} = {:e} does not exceed its coercivity threshold {:e}",
                        i + 1,
                        problem.mu[i],
                        th[i]
                    ));
                }
            }
        }
        for w in &problem.warnings {
            log::warn!("{w}");
        }
        Ok(problem)
    }
}

impl HierarchicProblem {
    pub fn builder(&self) -> &ProblemBuilder {
        &self.builder
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.builder.grid
    }

    pub fn regions(&self) -> &Regions {
        &self.builder.regions
    }

    pub fn omega(&self) -> &RegionMask {
        &self.omega
    }

    pub fn omega_i(&self, i: usize) -> &RegionMask {
        if i == 0 {
            &self.omega1
        } else {
            &self.omega2
        }
    }

    pub fn od(&self) -> &RegionMask {
        &self.od
    }

    pub fn omega_prime(&self) -> &RegionMask {
        &self.omega_prime
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.builder.coeffs
    }

    pub fn alpha(&self) -> [f64; 2] {
        self.builder.alpha
    }

    pub fn mu(&self) -> [f64; 2] {
        self.mu
    }

    pub fn y_d(&self, i: usize) -> &TwoComponentState {
        &self.builder.y_d[i]
    }

    pub fn y0(&self) -> &[Array1<f64>; 2] {
        &self.builder.y0
    }

    pub fn eta(&self) -> &EtaFunction {
        &self.eta
    }

    pub fn weights(&self) -> &CarlemanWeights {
        &self.weights
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.builder.settings
    }

    pub fn propagator(&self) -> &Arc<Propagator> {
        &self.propagator
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `a21` sign certificate on `O_d ∩ ω` (on `O_d` if they are disjoint).
    pub fn sign_certificate(&self) -> SignCertificate {
        let region = self.regions().omega.intersection(&self.regions().od);
        let mask = region
            .and_then(|r| RegionMask::new(self.grid(), &r, RegionLabel::Custom).ok())
            .unwrap_or_else(|| self.od.clone());
        self.coeffs().sign_certificate(&mask)
    }

    /// `‖Λ_i χ_{O_d}‖` for both followers, computed once.
    pub fn lambda_norms(&self) -> Result<[f64; 2]> {
        if let Some(v) = self.lambda_norms.get() {
            return Ok(*v);
        }
        let v = crate::nash::lambda_od_norms(self)?;
        Ok(*self.lambda_norms.get_or_init(|| v))
    }

    /// `μ_i > α_{3-i} ‖Λ_i χ_{O_d}‖² / (4ρ₀²)`.
    pub fn mu_thresholds(&self) -> Result<[f64; 2]> {
        let norms = self.lambda_norms()?;
        let rho0_sq = self.weights.rho0().powi(2);
        let a = self.alpha();
        Ok([
            a[1] * norms[0].powi(2) / (4.0 * rho0_sq),
            a[0] * norms[1].powi(2) / (4.0 * rho0_sq),
        ])
    }

    /// `ρ*^{-2}` per level (0 at the endpoints).
    pub fn rho_inv_sq_levels(&self) -> Vec<f64> {
        (0..self.grid().n_levels())
            .map(|k| self.weights.rho_star_inv_sq(k))
            .collect()
    }

    /// Forward `[y]`, backward `[φ¹, φ²]`: the follower optimality system.
    pub fn optimality_operator(&self) -> Result<&CoupledOperator> {
        if let Some(op) = self.optimality_op.get() {
            return Ok(op);
        }
        let op = self.coupled_structure()?;
        Ok(self.optimality_op.get_or_init(|| op))
    }

    /// Forward `[γ¹, γ²]`, backward `[ψ]`: the leader's dual system.
    pub fn dual_operator(&self) -> Result<&CoupledOperator> {
        if let Some(op) = self.dual_op.get() {
            return Ok(op);
        }
        let op = self.dual_structure()?;
        Ok(self.dual_op.get_or_init(|| op))
    }

    fn coupled_structure(&self) -> Result<CoupledOperator> {
        let n_levels = self.grid().n_levels();
        let ones = vec![1.0; n_levels];
        let damp = self.rho_inv_sq_levels();
        let mut couplings = Vec::new();
        for i in 0..2 {
            for c in 0..2 {
                couplings.push(Coupling {
                    from: BlockRef::Forward(0),
                    from_component: c,
                    to: BlockRef::Backward(i),
                    to_component: c,
                    node_weight: self.od.indicator() * self.alpha()[i],
                    time_factor: ones.clone(),
                });
            }
            couplings.push(Coupling {
                from: BlockRef::Backward(i),
                from_component: 0,
                to: BlockRef::Forward(0),
                to_component: 0,
                node_weight: self.omega_i(i).indicator() * (-1.0 / self.mu[i]),
                time_factor: damp.clone(),
            });
        }
        CoupledOperator::new(self.propagator.clone(), 1, 2, couplings, self.settings().coupled)
    }

    fn dual_structure(&self) -> Result<CoupledOperator> {
        let n_levels = self.grid().n_levels();
        let ones = vec![1.0; n_levels];
        let damp = self.rho_inv_sq_levels();
        let mut couplings = Vec::new();
        for i in 0..2 {
            for c in 0..2 {
                couplings.push(Coupling {
                    from: BlockRef::Forward(i),
                    from_component: c,
                    to: BlockRef::Backward(0),
                    to_component: c,
                    node_weight: self.od.indicator() * self.alpha()[i],
                    time_factor: ones.clone(),
                });
            }
            couplings.push(Coupling {
                from: BlockRef::Backward(0),
                from_component: 0,
                to: BlockRef::Forward(i),
                to_component: 0,
                node_weight: self.omega_i(i).indicator() * (-1.0 / self.mu[i]),
                time_factor: damp.clone(),
            });
        }
        CoupledOperator::new(self.propagator.clone(), 2, 1, couplings, self.settings().coupled)
    }
}

/// The 1-D desk benchmark: `Ω = (0,1)`, `T = 1`, `n_x = 31`, `n_t = 40`,
/// `ω = (0.3,0.7)`, `ω₁ = (0.05,0.2)`, `ω₂ = (0.8,0.95)`, `O_d = (0.25,0.75)`,
/// `a11 = a22 = 0.5`, `a12 = 0.2`, `a21 = 1`, `α = 1`, automatic `μ`, `λ = 2`
/// and automatic `s`.
pub fn benchmark_1d() -> ProblemBuilder {
    let grid = SpaceTimeGrid::unit(1, 31, 40, 1.0).expect("benchmark grid");
    benchmark_on(grid)
}

/// Benchmark data on a caller-chosen 1-D grid over `(0, 1)`.
pub fn benchmark_on(grid: SpaceTimeGrid) -> ProblemBuilder {
    let coeffs = CoefficientField::constant(&grid, 0.5, 0.2, 1.0, 0.5);
    let y0 = [
        sample_nodes(&grid, |p| (PI * p[0]).sin()),
        sample_nodes(&grid, |p| 0.5 * (2.0 * PI * p[0]).sin()),
    ];
    let y_d1 = TwoComponentState::new(
        Field::from_fn(&grid, |_, j| 0.3 * (PI * grid.coords(j)[0]).sin()),
        Field::zeros(&grid),
        Orientation::Forward,
    );
    let y_d2 = TwoComponentState::new(
        Field::from_fn(&grid, |_, _| 0.1),
        Field::from_fn(&grid, |_, _| -0.1),
        Orientation::Forward,
    );
    ProblemBuilder {
        regions: Regions {
            omega: Region::interval(0.3, 0.7),
            omega1: Region::interval(0.05, 0.2),
            omega2: Region::interval(0.8, 0.95),
            od: Region::interval(0.25, 0.75),
            omega_prime: None,
        },
        coeffs,
        alpha: [1.0, 1.0],
        mu: [MuChoice::Auto, MuChoice::Auto],
        y_d: [y_d1, y_d2],
        y0,
        lambda: 2.0,
        s: SChoice::Auto,
        c0_target: 0.0,
        settings: SolverSettings::default(),
        grid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_builds_with_auto_mu() {
        let p = benchmark_1d().build().unwrap();
        let th = p.mu_thresholds().unwrap();
        for i in 0..2 {
            assert!(th[i] > 0.0);
            assert!((p.mu()[i] - 2.0 * th[i]).abs() <= 1e-12 * p.mu()[i]);
        }
        assert!(p.warnings().is_empty(), "{:?}", p.warnings());
        assert!(p.sign_certificate().holds);
        assert_eq!(p.sign_certificate().a0, 1.0);
        let c = p.omega_prime().region().centroid()[0];
        assert!((c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlapping_follower_region_rejected() {
        let mut b = benchmark_1d();
        b.regions.omega1 = Region::interval(0.25, 0.35);
        let err = b.build().unwrap_err().to_string();
        assert!(err.contains("omega1 intersects omega"), "{err}");
    }

    #[test]
    fn disjoint_od_warns_but_builds() {
        let mut b = benchmark_1d();
        b.regions.od = Region::interval(0.75, 0.78);
        let p = b.build().unwrap();
        assert!(p.warnings().iter().any(|w| w.contains("Od does not intersect omega")));
    }

    #[test]
    fn explicit_omega_prime_must_sit_inside_omega() {
        let mut b = benchmark_1d();
        b.regions.omega_prime = Some(Region::interval(0.2, 0.5));
        assert!(b.build().is_err());
    }
}
