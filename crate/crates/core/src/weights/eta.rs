use crate::error::{Error, Result};
use crate::mesh::{RegionMask, SpaceTimeGrid};
use ndarray::Array1;

/// Profile on `[0, 1]` with `p(0) = p(1) = 0`, `max p = p(ξ_c) = 1` and
/// `p'` vanishing only at `ξ_c`.
///
/// `p'(ξ) = (ξ_c - ξ)(a(1-ξ)^m + bξ^m)` with the smallest `m` for which both
/// `a` and `b` are positive; the zero-mean condition on `p'` fixes their ratio.
/// Everything is evaluated in closed form; expanding into monomials loses all
/// accuracy once `m` is large (critical point near the boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitProfile {
    xi_c: f64,
    m: usize,
    a: f64,
    b: f64,
    scale: f64,
}

impl UnitProfile {
    pub fn new(xi_c: f64) -> Result<Self> {
        if !(xi_c > 0.0 && xi_c < 1.0) {
            return Err(Error::Weights(format!("critical point {xi_c} not inside (0, 1)")));
        }
        let mut m = 0usize;
        loop {
            let mf = m as f64;
            if 1.0 / (mf + 2.0) < xi_c && xi_c < (mf + 1.0) / (mf + 2.0) {
                break;
            }
            m += 1;
            if m > 200 {
                return Err(Error::Weights(format!(
                    "critical point {xi_c} too close to the boundary"
                )));
            }
        }
        let mf = m as f64;
        let a = 1.0 / (mf + 2.0) - xi_c / (mf + 1.0);
        let b = xi_c / (mf + 1.0) - 1.0 / ((mf + 1.0) * (mf + 2.0));
        let mut out = Self {
            xi_c,
            m,
            a,
            b,
            scale: 1.0,
        };
        out.scale = 1.0 / out.eval(0, xi_c);
        Ok(out)
    }

    pub fn degree_parameter(&self) -> usize {
        self.m
    }

    /// `j`-th derivative of `q(ξ) = a(1-ξ)^m + bξ^m`.
    fn q(&self, j: usize, xi: f64) -> f64 {
        if j > self.m {
            return 0.0;
        }
        let falling: f64 = (0..j).map(|i| (self.m - i) as f64).product();
        let e = (self.m - j) as i32;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        falling * (self.a * sign * (1.0 - xi).powi(e) + self.b * xi.powi(e))
    }

    /// `order`-th derivative of the normalized profile.
    pub fn eval(&self, order: usize, xi: f64) -> f64 {
        let mf = self.m as f64;
        let v = match order {
            0 => {
                let u = 1.0 - xi;
                let from_left = (self.xi_c - 1.0) * (1.0 - u.powi(self.m as i32 + 1)) / (mf + 1.0)
                    + (1.0 - u.powi(self.m as i32 + 2)) / (mf + 2.0);
                let from_right =
                    self.xi_c * xi.powi(self.m as i32 + 1) / (mf + 1.0) - xi.powi(self.m as i32 + 2) / (mf + 2.0);
                self.a * from_left + self.b * from_right
            }
            k => {
                (self.xi_c - xi) * self.q(k - 1, xi)
                    - if k >= 2 {
                        (k - 1) as f64 * self.q(k - 2, xi)
                    } else {
                        0.0
                    }
            }
        };
        v * self.scale
    }
}

/// Auxiliary function `η ≥ 0` with `η|∂Ω = 0`, `max η = 1` at the centroid of
/// `ω'` and `|∇η| > 0` away from it.
///
/// In 2-D `η(x, y) = η₁(x) η₂(y)`; its gradient vanishes at the corners of the
/// box, so the achieved bound on the nodes is `O(h)` there.
#[derive(Debug, Clone)]
pub struct EtaFunction {
    factors: Vec<UnitProfile>,
    lo: Vec<f64>,
    len: Vec<f64>,
    x_c: [f64; 2],
    values: Array1<f64>,
    grad: Vec<[f64; 2]>,
    /// `derivatives[k][axis]` holds `∂^{k+1}η/∂x_axis^{k+1}` at every node.
    derivatives: [Vec<Array1<f64>>; 4],
    c0: f64,
}

impl EtaFunction {
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn max(&self) -> f64 {
        1.0
    }

    pub fn critical_point(&self) -> [f64; 2] {
        self.x_c
    }

    /// Achieved `min |∇η|` over the nodes outside `ω'`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn gradient(&self, node: usize) -> [f64; 2] {
        self.grad[node]
    }

    pub fn gradient_norm(&self, node: usize) -> f64 {
        let [a, b] = self.grad[node];
        a.hypot(b)
    }

    /// Pure partial derivative of order `order ∈ 1..=4` along `axis`.
    pub fn derivative(&self, order: usize, axis: usize) -> &Array1<f64> {
        &self.derivatives[order - 1][axis]
    }

    /// Evaluate `η` at an arbitrary point of the closed box.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.factors
            .iter()
            .enumerate()
            .map(|(k, f)| f.eval(0, (p[k] - self.lo[k]) / self.len[k]))
            .product()
    }

    /// Number of interior critical nodes where `η'` changes sign (1-D scan).
    pub fn sign_changes(&self) -> usize {
        let d = &self.derivatives[0][0];
        d.windows(2).into_iter().filter(|w| w[0] * w[1] < 0.0).count()
    }
}

/// Build `η` for the given `ω'`; fails if `ω'` touches `∂Ω` or the achieved
/// gradient bound falls below `c0_target`.
pub fn build_eta(grid: &SpaceTimeGrid, omega_prime: &RegionMask, c0_target: f64) -> Result<EtaFunction> {
    let dom = grid.domain();
    let region = omega_prime.region();
    for (k, [a, b]) in region.intervals.iter().enumerate() {
        if !(*a > dom.lo[k] && *b < dom.hi[k]) {
            return Err(Error::Weights(format!(
                "omega_prime ({a}, {b}) on axis {k} touches the boundary of the domain"
            )));
        }
    }
    let x_c = region.centroid();
    let dim = grid.dim();
    let mut factors = Vec::with_capacity(dim);
    let mut lo = Vec::with_capacity(dim);
    let mut len = Vec::with_capacity(dim);
    for k in 0..dim {
        let l = dom.length(k);
        factors.push(UnitProfile::new((x_c[k] - dom.lo[k]) / l)?);
        lo.push(dom.lo[k]);
        len.push(l);
    }
    let n = grid.n_nodes();
    let axis_eval = |axis: usize, order: usize, x: f64| -> f64 {
        let xi = (x - lo[axis]) / len[axis];
        factors[axis].eval(order, xi) / len[axis].powi(order as i32)
    };
    let mut values = Array1::zeros(n);
    let mut grad = vec![[0.0; 2]; n];
    let mut derivatives: [Vec<Array1<f64>>; 4] = Default::default();
    for d in derivatives.iter_mut() {
        *d = vec![Array1::zeros(n); dim];
    }
    for j in 0..n {
        let p = grid.coords(j);
        let base: Vec<f64> = (0..dim).map(|k| axis_eval(k, 0, p[k])).collect();
        values[j] = base.iter().product();
        for axis in 0..dim {
            let other: f64 = (0..dim).filter(|&k| k != axis).map(|k| base[k]).product();
            for order in 1..=4 {
                derivatives[order - 1][axis][j] = axis_eval(axis, order, p[axis]) * other;
            }
            grad[j][axis] = derivatives[0][axis][j];
        }
    }
    let c0 = (0..n)
        .filter(|&j| !omega_prime.contains(j))
        .map(|j| grad[j][0].hypot(grad[j][1]))
        .fold(f64::INFINITY, f64::min);
    if !(c0 > 0.0) || c0 < c0_target {
        return Err(Error::Weights(format!(
            "achieved gradient bound {c0:e} below target {c0_target:e}"
        )));
    }
    Ok(EtaFunction {
        factors,
        lo,
        len,
        x_c,
        values,
        grad,
        derivatives,
        c0,
    })
}
