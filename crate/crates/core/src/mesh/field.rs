use super::grid::SpaceTimeGrid;
use super::region::RegionMask;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Zip};

/// One scalar unknown on every space-time node, stored level-major
/// (`n_t + 1` rows, one column per interior node).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Array2<f64>,
}

impl Field {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self {
            values: Array2::zeros((grid.n_levels(), grid.n_nodes())),
        }
    }

    pub fn from_array(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            values: Array2::from_shape_fn((grid.n_levels(), grid.n_nodes()), |(k, j)| f(k, j)),
        }
    }

    /// Same spatial profile on every level.
    pub fn constant_in_time(grid: &SpaceTimeGrid, profile: ArrayView1<f64>) -> Self {
        Self::from_fn(grid, |_, j| profile[j])
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_levels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn level(&self, k: usize) -> ArrayView1<'_, f64> {
        self.values.row(k)
    }

    pub fn level_mut(&mut self, k: usize) -> ArrayViewMut1<'_, f64> {
        self.values.row_mut(k)
    }

    pub fn get(&self, level: usize, node: usize) -> f64 {
        self.values[[level, node]]
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            values: &self.values * c,
        }
    }

    /// `self += c · other`
    pub fn axpy(&mut self, c: f64, other: &Field) {
        Zip::from(&mut self.values)
            .and(&other.values)
            .for_each(|a, &b| *a += c * b);
    }

    /// Zero every node outside `mask`.
    pub fn restrict(&mut self, mask: &RegionMask) {
        let ind = mask.indicator();
        for mut row in self.values.rows_mut() {
            Zip::from(&mut row).and(ind).for_each(|a, &m| *a *= m);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(0.0f64, |m, a, b| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn check_grid(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if self.values.dim() != (grid.n_levels(), grid.n_nodes()) {
            return Err(Error::GridMismatch(format!(
                "field has shape {:?}, grid expects ({}, {})",
                self.values.dim(),
                grid.n_levels(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }
}

/// Time quadrature rule.
///
/// Implicit Euler pairs a forward state at level `k` with backward sources at
/// the same level for `k = 1..=n_t`, and forward sources at level `k` with
/// backward states for `k = 0..n_t`. Each rule gives weight `dt` to its levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRule {
    /// Levels `1..=n_t`; a window `(a, b]` keeps levels with `a < t_k ≤ b`.
    State,
    /// Levels `0..n_t`; a window `[a, b)` keeps levels with `a ≤ t_k < b`.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }
}

/// Which part of `Q` an integral covers.
#[derive(Debug, Clone, Copy)]
pub struct Integration<'a> {
    pub rule: TimeRule,
    pub mask: Option<&'a RegionMask>,
    pub window: Option<TimeWindow>,
}

impl<'a> Integration<'a> {
    pub fn state() -> Self {
        Self {
            rule: TimeRule::State,
            mask: None,
            window: None,
        }
    }

    pub fn source() -> Self {
        Self {
            rule: TimeRule::Source,
            mask: None,
            window: None,
        }
    }

    pub fn on(mut self, mask: &'a RegionMask) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn window(mut self, start: f64, end: f64) -> Self {
        self.window = Some(TimeWindow::new(start, end));
        self
    }
}

/// Quadrature weight of every level under `rule` restricted to `window`.
pub fn level_weights(grid: &SpaceTimeGrid, rule: TimeRule, window: Option<TimeWindow>) -> Vec<f64> {
    let n = grid.n_t();
    let tol = 1e-9 * grid.dt();
    (0..=n)
        .map(|k| {
            let in_rule = match rule {
                TimeRule::State => k >= 1,
                TimeRule::Source => k < n,
            };
            if !in_rule {
                return 0.0;
            }
            let t = grid.time(k);
            let in_window = match (window, rule) {
                (None, _) => true,
                (Some(w), TimeRule::State) => t > w.start + tol && t <= w.end + tol,
                (Some(w), TimeRule::Source) => t >= w.start - tol && t < w.end - tol,
            };
            if in_window {
                grid.dt()
            } else {
                0.0
            }
        })
        .collect()
}

/// `h^d Σ_j m_j f_j g_j`
pub fn spatial_inner(grid: &SpaceTimeGrid, f: ArrayView1<f64>, g: ArrayView1<f64>, mask: Option<&RegionMask>) -> f64 {
    let s: f64 = match mask {
        None => f.iter().zip(g.iter()).map(|(a, b)| a * b).sum(),
        Some(m) => f
            .iter()
            .zip(g.iter())
            .zip(m.indicator().iter())
            .map(|((a, b), w)| a * b * w)
            .sum(),
    };
    s * grid.cell_volume()
}

pub fn spatial_norm(grid: &SpaceTimeGrid, f: ArrayView1<f64>) -> f64 {
    spatial_inner(grid, f, f, None).sqrt()
}

/// Quadrature approximation of `∫∫ f g dx dt` over the selected part of `Q`.
pub fn inner_product(grid: &SpaceTimeGrid, f: &Field, g: &Field, over: Integration<'_>) -> Result<f64> {
    f.check_grid(grid)?;
    g.check_grid(grid)?;
    Ok(inner_product_unchecked(grid, f, g, over))
}

pub(crate) fn inner_product_unchecked(grid: &SpaceTimeGrid, f: &Field, g: &Field, over: Integration<'_>) -> f64 {
    let weights = level_weights(grid, over.rule, over.window);
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(k, &w)| w * spatial_inner(grid, f.level(k), g.level(k), over.mask))
        .sum()
}

pub fn norm_sq(grid: &SpaceTimeGrid, f: &Field, over: Integration<'_>) -> f64 {
    inner_product_unchecked(grid, f, f, over)
}

/// Sample a function of `(x, y)` on the interior nodes.
pub fn sample_nodes(grid: &SpaceTimeGrid, f: impl Fn([f64; 2]) -> f64) -> Array1<f64> {
    Array1::from_shape_fn(grid.n_nodes(), |j| f(grid.coords(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::region::{Region, RegionLabel};
    use std::f64::consts::PI;

    #[test]
    fn measure_of_q() {
        let g = SpaceTimeGrid::unit(1, 31, 40, 1.0).unwrap();
        let one = Field::from_fn(&g, |_, _| 1.0);
        let v = inner_product(&g, &one, &one, Integration::state()).unwrap();
        assert!((v - 1.0).abs() < 0.05);
        // exact against the discrete measure
        let discrete = g.n_nodes() as f64 * g.h(0) * 1.0;
        assert!((v - discrete).abs() <= 1e-12 * discrete);
    }

    #[test]
    fn orthogonal_modes() {
        let g = SpaceTimeGrid::unit(1, 63, 2, 1.0).unwrap();
        let a = sample_nodes(&g, |p| (PI * p[0]).sin());
        let b = sample_nodes(&g, |p| (2.0 * PI * p[0]).sin());
        assert!(spatial_inner(&g, a.view(), b.view(), None).abs() < 1e-12);
        assert!((spatial_inner(&g, a.view(), a.view(), None) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn masked_half_interval() {
        let g = SpaceTimeGrid::unit(1, 31, 10, 1.0).unwrap();
        let m = RegionMask::new(&g, &Region::interval(0.0, 0.5), RegionLabel::Custom).unwrap();
        let one = Field::from_fn(&g, |_, _| 1.0);
        for over in [Integration::state().on(&m), Integration::source().on(&m)] {
            let v = inner_product(&g, &one, &one, over).unwrap();
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn windows_are_additive() {
        let g = SpaceTimeGrid::unit(1, 7, 40, 2.0).unwrap();
        let f = Field::from_fn(&g, |k, j| (k as f64 * 0.37 + j as f64).sin());
        for rule in [Integration::state(), Integration::source()] {
            let all = inner_product(&g, &f, &f, rule).unwrap();
            let a = inner_product(&g, &f, &f, rule.window(0.0, 1.0)).unwrap();
            let b = inner_product(&g, &f, &f, rule.window(1.0, 2.0)).unwrap();
            assert!((all - a - b).abs() <= 1e-13 * all);
        }
        let w = level_weights(&g, TimeRule::State, Some(TimeWindow::new(0.5, 1.5)));
        let len: f64 = w.iter().sum();
        assert!((len - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rules_cover_horizon() {
        let g = SpaceTimeGrid::unit(2, 4, 7, 1.3).unwrap();
        for rule in [TimeRule::State, TimeRule::Source] {
            let w: f64 = level_weights(&g, rule, None).iter().sum();
            assert!((w - 1.3).abs() < 1e-12);
        }
        assert_eq!(level_weights(&g, TimeRule::State, None)[0], 0.0);
        assert_eq!(level_weights(&g, TimeRule::Source, None)[7], 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g = SpaceTimeGrid::unit(1, 7, 4, 1.0).unwrap();
        let other = SpaceTimeGrid::unit(1, 9, 4, 1.0).unwrap();
        let f = Field::zeros(&g);
        let h = Field::zeros(&other);
        assert!(inner_product(&g, &f, &h, Integration::state()).is_err());
    }
}
