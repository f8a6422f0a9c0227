use super::eta::EtaFunction;
use crate::error::{Error, Result};
use crate::mesh::{Field, SpaceTimeGrid};
use std::io::Write;

/// `λ` and `s` for the weight families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    pub lambda: f64,
    pub s: f64,
}

impl CarlemanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 1, got {}",
                self.lambda
            )));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidParameter(format!("s must be positive, got {}", self.s)));
        }
        Ok(())
    }
}

/// Largest `s·σ*` allowed at the first interior level when `s` is chosen
/// automatically; keeps `ρ*² = e^{sσ*}` inside f64.
pub const AUTO_S_EXPONENT: f64 = 200.0;

/// `σ*(t)`: maximum over the closed domain, attained on `∂Ω` where `η = 0`.
pub fn sigma_star_at(lambda: f64, t: f64, horizon: f64) -> f64 {
    let m = 1.0;
    ((4.0 * lambda * m).exp() - (2.0 * lambda * m).exp()) / (t * (horizon - t)).sqrt()
}

/// `s` with `s·σ*(t₁) = AUTO_S_EXPONENT`.
pub fn auto_s(grid: &SpaceTimeGrid, lambda: f64) -> f64 {
    AUTO_S_EXPONENT / sigma_star_at(lambda, grid.time(1), grid.horizon())
}

/// `(σ, τ)` on every node; both are `+∞` on the levels `t ∈ {0, T}`.
pub fn eval_sigma_tau(eta: &EtaFunction, lambda: f64, grid: &SpaceTimeGrid) -> (Field, Field) {
    let denom: Vec<f64> = (0..grid.n_levels())
        .map(|k| {
            let t = grid.time(k);
            (t * (grid.horizon() - t)).sqrt()
        })
        .collect();
    weight_pair(eta, lambda, grid, &denom)
}

fn weight_pair(eta: &EtaFunction, lambda: f64, grid: &SpaceTimeGrid, denom: &[f64]) -> (Field, Field) {
    let m = eta.max();
    let top = (4.0 * lambda * m).exp();
    let num_tau: Vec<f64> = eta.values().iter().map(|&e| (lambda * (2.0 * m + e)).exp()).collect();
    let sigma = Field::from_fn(grid, |k, j| {
        if denom[k] > 0.0 {
            (top - num_tau[j]) / denom[k]
        } else {
            f64::INFINITY
        }
    });
    let tau = Field::from_fn(grid, |k, j| {
        if denom[k] > 0.0 {
            num_tau[j] / denom[k]
        } else {
            f64::INFINITY
        }
    });
    (sigma, tau)
}

/// `(σ*, ρ*, ρ₀)` per level; `ρ* = +∞` at the endpoint levels and
/// `ρ₀ = ρ*(T/2)`, the continuous minimum.
pub fn eval_sigma_star_rho_star(grid: &SpaceTimeGrid, lambda: f64, s: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = grid.n_t();
    let sigma_star: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 || k == n {
                f64::INFINITY
            } else {
                sigma_star_at(lambda, grid.time(k), grid.horizon())
            }
        })
        .collect();
    let rho_star = sigma_star.iter().map(|&v| (0.5 * s * v).exp()).collect();
    let rho0 = (0.5 * s * sigma_star_at(lambda, 0.5 * grid.horizon(), grid.horizon())).exp();
    (sigma_star, rho_star, rho0)
}

/// `l(t)`, `σ̄`, `τ̄`: the denominator frozen at `T/2` on `[0, T/2]`.
pub fn eval_modified_weights(eta: &EtaFunction, lambda: f64, grid: &SpaceTimeGrid) -> (Vec<f64>, Field, Field) {
    let half = 0.5 * grid.horizon();
    let l: Vec<f64> = (0..grid.n_levels())
        .map(|k| {
            let t = grid.time(k);
            if t <= half {
                half
            } else {
                (t * (grid.horizon() - t)).sqrt()
            }
        })
        .collect();
    let (sb, tb) = weight_pair(eta, lambda, grid, &l);
    (l, sb, tb)
}

/// All weight families evaluated on one grid.
#[derive(Debug, Clone)]
pub struct CarlemanWeights {
    params: CarlemanParams,
    sigma: Field,
    tau: Field,
    sigma_star: Vec<f64>,
    rho_star: Vec<f64>,
    rho0: f64,
    l: Vec<f64>,
    sigma_bar: Field,
    tau_bar: Field,
    times: Vec<f64>,
}

impl CarlemanWeights {
    pub fn build(grid: &SpaceTimeGrid, eta: &EtaFunction, params: CarlemanParams) -> Result<Self> {
        params.validate()?;
        let (sigma, tau) = eval_sigma_tau(eta, params.lambda, grid);
        let (sigma_star, rho_star, rho0) = eval_sigma_star_rho_star(grid, params.lambda, params.s);
        let (l, sigma_bar, tau_bar) = eval_modified_weights(eta, params.lambda, grid);
        let interior_ok = rho_star[1..grid.n_t()].iter().all(|r| r.is_finite());
        if !interior_ok {
            return Err(Error::Weights(format!(
                "rho_star overflows for lambda = {}, s = {}; reduce s (auto picks s = {:.6e})",
                params.lambda,
                params.s,
                auto_s(grid, params.lambda)
            )));
        }
        Ok(Self {
            params,
            sigma,
            tau,
            sigma_star,
            rho_star,
            rho0,
            l,
            sigma_bar,
            tau_bar,
            times: (0..grid.n_levels()).map(|k| grid.time(k)).collect(),
        })
    }

    pub fn params(&self) -> CarlemanParams {
        self.params
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn s(&self) -> f64 {
        self.params.s
    }

    pub fn sigma(&self) -> &Field {
        &self.sigma
    }

    pub fn tau(&self) -> &Field {
        &self.tau
    }

    pub fn sigma_star(&self) -> &[f64] {
        &self.sigma_star
    }

    pub fn rho_star(&self) -> &[f64] {
        &self.rho_star
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn sigma_bar(&self) -> &Field {
        &self.sigma_bar
    }

    pub fn tau_bar(&self) -> &Field {
        &self.tau_bar
    }

    /// `ρ*(t_k)²`; infinite at the endpoint levels.
    pub fn rho_star_sq(&self, level: usize) -> f64 {
        let v = self.sigma_star[level];
        if v.is_finite() {
            (self.params.s * v).exp()
        } else {
            f64::INFINITY
        }
    }

    /// `ρ*(t_k)^{-2}`; exactly 0 at the endpoint levels.
    pub fn rho_star_inv_sq(&self, level: usize) -> f64 {
        (-self.params.s * self.sigma_star[level]).exp()
    }

    /// `e^{-2sσ}(sτ)^k`, 0 where `σ = ∞`.
    pub fn damped(&self, level: usize, node: usize, k: f64) -> f64 {
        damped_value(self.params.s, self.sigma.get(level, node), self.tau.get(level, node), k)
    }

    /// `e^{-2sσ̄}(sτ̄)^k`.
    pub fn damped_bar(&self, level: usize, node: usize, k: f64) -> f64 {
        damped_value(
            self.params.s,
            self.sigma_bar.get(level, node),
            self.tau_bar.get(level, node),
            k,
        )
    }

    /// CSV with columns `t, x[, y], sigma, tau, sigma_bar, tau_bar`.
    pub fn write_csv<W: Write>(&self, grid: &SpaceTimeGrid, mut w: W) -> std::io::Result<()> {
        if grid.dim() == 1 {
            writeln!(w, "t,x,sigma,tau,sigma_bar,tau_bar")?;
        } else {
            writeln!(w, "t,x,y,sigma,tau,sigma_bar,tau_bar")?;
        }
        for (k, t) in self.times.iter().enumerate() {
            for j in 0..grid.n_nodes() {
                let p = grid.coords(j);
                write!(w, "{t:.16e},{:.16e},", p[0])?;
                if grid.dim() == 2 {
                    write!(w, "{:.16e},", p[1])?;
                }
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    self.sigma.get(k, j),
                    self.tau.get(k, j),
                    self.sigma_bar.get(k, j),
                    self.tau_bar.get(k, j)
                )?;
            }
        }
        Ok(())
    }
}

/// `exp(-2sσ + k ln(sτ))`, evaluated in log space so large `σ` underflows to
/// 0 cleanly instead of producing `0·∞`.
pub fn damped_value(s: f64, sigma: f64, tau: f64, k: f64) -> f64 {
    if !sigma.is_finite() {
        return 0.0;
    }
    (-2.0 * s * sigma + k * (s * tau).ln()).exp()
}
