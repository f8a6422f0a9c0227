use super::coefficients::CoefficientField;
use super::state::{interleave, Orientation, TwoComponentState};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, BandedMatrix};
use crate::mesh::{bilaplacian, dirichlet_laplacian, Field, RegionMask, SpaceTimeGrid, SparseOperator};
use ndarray::ArrayView1;
use sprs::TriMat;

/// One additive source contribution: `scale · χ_mask · values` in one component.
#[derive(Debug, Clone)]
pub struct SourceTerm {
    pub component: usize,
    pub values: Field,
    pub mask: Option<RegionMask>,
    pub scale: f64,
}

/// Right-hand side of a two-component system, assembled from terms.
#[derive(Debug, Clone, Default)]
pub struct SourceSpec {
    terms: Vec<SourceTerm>,
}

impl SourceSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, term: SourceTerm) -> Self {
        self.terms.push(term);
        self
    }

    pub fn push(&mut self, term: SourceTerm) {
        self.terms.push(term);
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of all terms; each vanishes outside its mask.
    pub fn assemble(&self, grid: &SpaceTimeGrid, orientation: Orientation) -> TwoComponentState {
        let mut out = TwoComponentState::zeros(grid, orientation);
        for t in &self.terms {
            let mut f = t.values.scaled(t.scale);
            if let Some(m) = &t.mask {
                f.restrict(m);
            }
            out.component_mut(t.component).axpy(1.0, &f);
        }
        out
    }
}

/// Implicit Euler for `∂_t c + Δ²c + a c = f` and its exact discrete transpose.
///
/// Forward: `M_{k+1} c^{k+1} = c^k + dt f^k` with `M_k = I + dt(B ⊗ I₂ + a(t_k))`,
/// `k = 0..n_t-1`. Backward: `M_k^T p^{k-1} = p^k + dt r^k`, `k = n_t..1`.
/// Unknowns are interleaved per node. Step factorizations are cached; a single
/// pair serves every step when the coefficients do not depend on time.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: SpaceTimeGrid,
    laplacian: SparseOperator,
    bilaplacian: SparseOperator,
    coeffs: CoefficientField,
    factors: Vec<(BandedLu, BandedLu)>,
}

impl Propagator {
    pub fn new(grid: &SpaceTimeGrid, coeffs: CoefficientField) -> Result<Self> {
        let laplacian = dirichlet_laplacian(grid);
        let bilap = bilaplacian(&laplacian);
        let mut out = Self {
            grid: grid.clone(),
            laplacian,
            bilaplacian: bilap,
            coeffs,
            factors: Vec::new(),
        };
        let levels: Vec<usize> = if out.coeffs.is_time_constant() {
            vec![1]
        } else {
            (1..=grid.n_t()).collect()
        };
        for k in levels {
            let m = out.step_matrix(k);
            let mt = m.transpose();
            out.factors
                .push((m.factor("forward step matrix")?, mt.factor("backward step matrix")?));
        }
        Ok(out)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.laplacian
    }

    pub fn bilaplacian(&self) -> &SparseOperator {
        &self.bilaplacian
    }

    /// Interleaved triplets of `M_level`.
    pub fn step_triplets(&self, level: usize) -> Vec<(usize, usize, f64)> {
        let dt = self.grid.dt();
        let mut out = Vec::new();
        for (i, j, b) in self.bilaplacian.triplets() {
            for c in 0..2 {
                out.push((2 * i + c, 2 * j + c, dt * b));
            }
        }
        for i in 0..self.grid.n_nodes() {
            let a = self.coeffs.get(level, i);
            for r in 0..2 {
                for c in 0..2 {
                    let v = dt * a[r][c] + if r == c { 1.0 } else { 0.0 };
                    if v != 0.0 {
                        out.push((2 * i + r, 2 * i + c, v));
                    }
                }
            }
        }
        out
    }

    pub fn step_matrix(&self, level: usize) -> BandedMatrix {
        let n = 2 * self.grid.n_nodes();
        let mut tri = TriMat::new((n, n));
        for (i, j, v) in self.step_triplets(level) {
            tri.add_triplet(i, j, v);
        }
        BandedMatrix::from_sparse(&tri.to_csr())
    }

    fn lu(&self, level: usize) -> &(BandedLu, BandedLu) {
        if self.factors.len() == 1 {
            &self.factors[0]
        } else {
            &self.factors[level - 1]
        }
    }

    /// March forward from `initial`; `source` is read on levels `0..n_t`.
    pub fn solve_forward(
        &self,
        source: Option<&TwoComponentState>,
        initial: [ArrayView1<f64>; 2],
    ) -> Result<TwoComponentState> {
        let n_t = self.grid.n_t();
        let dt = self.grid.dt();
        let mut out = TwoComponentState::zeros(&self.grid, Orientation::Forward);
        let mut v = interleave(initial[0], initial[1]);
        out.set_level(0, &v);
        for k in 0..n_t {
            if let Some(f) = source {
                for (vi, fi) in v.iter_mut().zip(f.level_vector(k)) {
                    *vi += dt * fi;
                }
            }
            self.lu(k + 1).0.solve_in_place(&mut v);
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("forward solve"));
            }
            out.set_level(k + 1, &v);
        }
        Ok(out)
    }

    /// March backward from `terminal`; `source` is read on levels `1..=n_t`.
    pub fn solve_backward(
        &self,
        source: Option<&TwoComponentState>,
        terminal: [ArrayView1<f64>; 2],
    ) -> Result<TwoComponentState> {
        let n_t = self.grid.n_t();
        let dt = self.grid.dt();
        let mut out = TwoComponentState::zeros(&self.grid, Orientation::Backward);
        let mut v = interleave(terminal[0], terminal[1]);
        out.set_level(n_t, &v);
        for k in (1..=n_t).rev() {
            if let Some(r) = source {
                for (vi, ri) in v.iter_mut().zip(r.level_vector(k)) {
                    *vi += dt * ri;
                }
            }
            self.lu(k).1.solve_in_place(&mut v);
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("backward solve"));
            }
            out.set_level(k - 1, &v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_nodes, Integration};
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(g: &SpaceTimeGrid, rng: &mut ChaCha8Rng) -> TwoComponentState {
        TwoComponentState::new(
            Field::from_fn(g, |_, _| rng.random_range(-1.0..1.0)),
            Field::from_fn(g, |_, _| rng.random_range(-1.0..1.0)),
            Orientation::Forward,
        )
    }

    #[test]
    fn zero_data_zero_trajectory() {
        let g = SpaceTimeGrid::unit(1, 9, 5, 1.0).unwrap();
        let p = Propagator::new(&g, CoefficientField::constant(&g, 0.5, 0.2, 1.0, 0.5)).unwrap();
        let z = Array1::zeros(9);
        assert!(p.solve_forward(None, [z.view(), z.view()]).unwrap().is_zero());
        assert!(p.solve_backward(None, [z.view(), z.view()]).unwrap().is_zero());
    }

    #[test]
    fn decoupled_second_component_stays_zero() {
        let g = SpaceTimeGrid::unit(1, 15, 10, 0.1).unwrap();
        let p = Propagator::new(&g, CoefficientField::constant(&g, 0.3, 0.0, 0.0, 0.7)).unwrap();
        let y0 = sample_nodes(&g, |x| (PI * x[0]).sin());
        let z = Array1::zeros(15);
        let s = p.solve_forward(None, [y0.view(), z.view()]).unwrap();
        assert!(s.c2.is_zero());
        assert!(s.c1.get(10, 7) > 0.0);
    }

    #[test]
    fn analytic_mode_error_is_small() {
        let g = SpaceTimeGrid::unit(1, 63, 400, 0.01).unwrap();
        let p = Propagator::new(&g, CoefficientField::zero(&g)).unwrap();
        let y0 = sample_nodes(&g, |x| (PI * x[0]).sin());
        let z = Array1::zeros(63);
        let s = p.solve_forward(None, [y0.view(), z.view()]).unwrap();
        let decay = (-PI.powi(4) * 0.01f64).exp();
        let err = (0..63)
            .map(|j| (s.c1.get(400, j) - decay * y0[j]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "err {err}");
    }

    #[test]
    fn energy_non_increasing_without_coupling() {
        let g = SpaceTimeGrid::unit(1, 15, 20, 0.5).unwrap();
        let p = Propagator::new(&g, CoefficientField::zero(&g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array1::from_shape_fn(15, |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(15, |_| rng.random_range(-1.0..1.0));
        let s = p.solve_forward(None, [a.view(), b.view()]).unwrap();
        let e: Vec<f64> = (0..=20)
            .map(|k| s.level_vector(k).iter().map(|v| v * v).sum())
            .collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn backward_equals_forward_for_symmetric_coupling() {
        let g = SpaceTimeGrid::unit(1, 11, 8, 1.0).unwrap();
        let p = Propagator::new(&g, CoefficientField::constant(&g, 0.4, 0.3, 0.3, 0.9)).unwrap();
        let d1 = sample_nodes(&g, |x| x[0] * (1.0 - x[0]));
        let d2 = sample_nodes(&g, |x| (3.0 * x[0]).sin());
        let f = p.solve_forward(None, [d1.view(), d2.view()]).unwrap();
        let b = p.solve_backward(None, [d1.view(), d2.view()]).unwrap();
        for k in 0..=8 {
            let fk = f.level_vector(k);
            let bk = b.level_vector(8 - k);
            for (x, y) in fk.iter().zip(&bk) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backward_matrix_is_transpose_of_forward_matrix() {
        // assemble both solution operators column by column on a tiny grid
        let g = SpaceTimeGrid::unit(1, 3, 3, 1.0).unwrap();
        let coeffs = CoefficientField::from_fields(
            &g,
            [
                [
                    Field::from_fn(&g, |k, j| 0.1 * k as f64 + 0.2 * j as f64),
                    Field::from_fn(&g, |_, _| 0.3),
                ],
                [
                    Field::from_fn(&g, |k, _| 1.0 - 0.2 * k as f64),
                    Field::from_fn(&g, |_, j| 0.5 * j as f64),
                ],
            ],
        )
        .unwrap();
        let p = Propagator::new(&g, coeffs).unwrap();
        let n = 2 * 3 * 3; // levels 0..n_t-1 of sources ↔ levels 1..n_t of states
        let z = Array1::zeros(3);
        let mut fwd = vec![vec![0.0; n]; n];
        for col in 0..n {
            let mut f = TwoComponentState::zeros(&g, Orientation::Forward);
            let (lvl, rest) = (col / 6, col % 6);
            let mut v = vec![0.0; 6];
            v[rest] = 1.0;
            f.set_level(lvl, &v);
            let s = p.solve_forward(Some(&f), [z.view(), z.view()]).unwrap();
            for row in 0..n {
                fwd[row][col] = s.level_vector(row / 6 + 1)[row % 6];
            }
        }
        for row in 0..n {
            let mut r = TwoComponentState::zeros(&g, Orientation::Backward);
            let mut v = vec![0.0; 6];
            v[row % 6] = 1.0;
            r.set_level(row / 6 + 1, &v);
            let s = p.solve_backward(Some(&r), [z.view(), z.view()]).unwrap();
            for col in 0..n {
                let back = s.level_vector(col / 6)[col % 6];
                assert!((back - fwd[row][col]).abs() < 1e-15, "({row},{col})");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn discrete_duality(seed in 0u64..1000, a21 in -2.0f64..2.0, a12 in -2.0f64..2.0) {
            let g = SpaceTimeGrid::unit(1, 9, 12, 1.0).unwrap();
            let p = Propagator::new(&g, CoefficientField::constant(&g, 0.5, a12, a21, -0.3)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_state(&g, &mut rng);
            let w = random_state(&g, &mut rng);
            let y0 = [Array1::from_shape_fn(9, |_| rng.random_range(-1.0..1.0)), Array1::from_shape_fn(9, |_| rng.random_range(-1.0..1.0))];
            let pt = [Array1::from_shape_fn(9, |_| rng.random_range(-1.0..1.0)), Array1::from_shape_fn(9, |_| rng.random_range(-1.0..1.0))];
            let y = p.solve_forward(Some(&f), [y0[0].view(), y0[1].view()]).unwrap();
            let psi = p.solve_backward(Some(&w), [pt[0].view(), pt[1].view()]).unwrap();
            // ⟨y, w⟩_state + ⟨y(T), p^T⟩ = ⟨f, ψ⟩_source + ⟨y⁰, ψ(0)⟩
            let h = g.cell_volume();
            let dotv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h;
            let lhs = y.inner(&g, &w, Integration::state()).unwrap()
                + dotv(&y.level_vector(12), &interleave(pt[0].view(), pt[1].view()));
            let rhs = f.inner(&g, &psi, Integration::source()).unwrap()
                + dotv(&interleave(y0[0].view(), y0[1].view()), &psi.level_vector(0));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0), "{lhs} vs {rhs}");
        }
    }
}
