use super::*;
use crate::leader::{gramian_apply, pair_inner, solve_dual};
use crate::mesh::{Field, SpaceTimeGrid};
use crate::problem::{benchmark_on, HierarchicProblem};
use std::f64::consts::PI;

fn small() -> HierarchicProblem {
    benchmark_on(SpaceTimeGrid::unit(1, 15, 20, 1.0).unwrap())
        .build()
        .unwrap()
}

fn mode(grid: &SpaceTimeGrid) -> Field {
    Field::from_fn(grid, |k, j| {
        (-PI.powi(4) * grid.time(k)).exp() * (PI * grid.coords(j)[0]).sin()
    })
}

#[test]
fn carleman_functional_is_quadratic() {
    let p = small();
    let g = p.grid();
    let zero = carleman_i(g, p.propagator(), p.weights(), &Field::zeros(g));
    assert_eq!(zero.total, 0.0);
    assert!(zero.terms.iter().all(|t| *t == 0.0));
    let f = mode(g);
    let one = carleman_i(g, p.propagator(), p.weights(), &f);
    let two = carleman_i(g, p.propagator(), p.weights(), &f.scaled(2.0));
    assert!(one.total > 0.0 && one.terms.iter().all(|t| *t >= 0.0));
    assert!((two.total - 4.0 * one.total).abs() <= 1e-13 * two.total);
}

#[test]
fn carleman_functional_matches_straight_loop() {
    let p = small();
    let g = p.grid();
    let f = mode(g);
    let got = carleman_i(g, p.propagator(), p.weights(), &f).total;

    // independent evaluation: explicit 1-D stencils with zero ghosts
    let n = g.n_x();
    let h = g.h(0);
    let (lam, s) = (p.weights().lambda(), p.weights().s());
    let v = |k: usize, i: isize| {
        if i < 0 || i >= n as isize {
            0.0
        } else {
            f.get(k, i as usize)
        }
    };
    let lap = |k: usize, i: isize| {
        if i < 0 || i >= n as isize {
            0.0
        } else {
            (v(k, i + 1) - 2.0 * v(k, i) + v(k, i - 1)) / (h * h)
        }
    };
    let mut total = 0.0;
    for k in 1..g.n_t() {
        for i in 0..n as isize {
            let j = i as usize;
            let sigma = p.weights().sigma().get(k, j);
            let tau = p.weights().tau().get(k, j);
            let e = (-2.0 * s * sigma).exp();
            let st = s * tau;
            let phi = v(k, i);
            let dx = (v(k, i + 1) - v(k, i - 1)) / (2.0 * h);
            let dxx = (v(k, i + 1) - 2.0 * phi + v(k, i - 1)) / (h * h);
            let dlap = (lap(k, i + 1) - lap(k, i - 1)) / (2.0 * h);
            let bi = (lap(k, i + 1) - 2.0 * lap(k, i) + lap(k, i - 1)) / (h * h);
            let pt = (v(k + 1, i) - phi) / g.dt();
            let integrand = lam.powi(8) * st.powi(6) * phi * phi
                + lam.powi(6) * st.powi(4) * dx * dx
                + lam.powi(4) * st.powi(3) * dxx * dxx
                + lam.powi(4) * st.powi(2) * dxx * dxx
                + lam.powi(2) * st * dlap * dlap
                + (pt * pt + bi * bi) / st;
            total += g.dt() * h * e * integrand;
        }
    }
    assert!((got - total).abs() <= 1e-10 * total, "{got} vs {total}");
}

#[test]
fn modified_functional_additivity_and_coincidence() {
    let p = small();
    let g = p.grid();
    let f = mode(g);
    let (prop, w) = (p.propagator(), p.weights());
    let full = carleman_i_bar(g, prop, w, &f, (0.0, 1.0), false);
    let first = carleman_i_bar(g, prop, w, &f, (0.0, 0.5), false);
    let second = carleman_i_bar(g, prop, w, &f, (0.5, 1.0), false);
    assert!(full > 0.0);
    assert!((full - first - second).abs() <= 1e-13 * full);
    let plain = carleman_i_bar(g, prop, w, &f, (0.5, 1.0), true);
    assert!((second - plain).abs() <= 1e-13 * plain.max(f64::MIN_POSITIVE));
    assert_eq!(carleman_i_bar(g, prop, w, &Field::zeros(g), (0.0, 1.0), false), 0.0);
}

#[test]
fn observability_estimate_dominates_samples() {
    let p = small();
    let rep = observability_ratio(&p, 8, 5000, 1).unwrap();
    assert!(rep.all_finite);
    assert!(
        rep.power_estimate >= rep.sample_max * (1.0 - 1e-9),
        "{} < {}",
        rep.power_estimate,
        rep.sample_max
    );

    // against a dense generalised eigen-solve
    let (l, r) = observability_forms(&p).unwrap();
    let dim = l.nrows();
    let c = (&r + nalgebra::DMatrix::identity(dim, dim) * DENOMINATOR_SHIFT)
        .cholesky()
        .unwrap();
    let li = c.l().try_inverse().unwrap();
    let b = &li * &l * li.transpose();
    let top = b.symmetric_eigen().eigenvalues.max();
    assert!(
        (rep.power_estimate - top).abs() <= 1e-6 * top,
        "{} vs {top}",
        rep.power_estimate
    );
}

#[test]
fn observability_rhs_is_the_gramian_form() {
    let p = small();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    use rand::SeedableRng;
    let psi_t = random_terminal(p.grid(), &mut rng);
    let dual = solve_dual(&p, &psi_t).unwrap();
    let (_, rhs) = observability_sides(&p, &dual).unwrap();
    let form = pair_inner(p.grid(), &gramian_apply(&p, &psi_t).unwrap(), &psi_t);
    assert!((rhs - form).abs() <= 1e-12 * rhs, "{rhs} vs {form}");
}

#[test]
fn energy_ratios_are_scale_invariant() {
    let p = small();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    use rand::SeedableRng;
    let psi_t = random_terminal(p.grid(), &mut rng);
    let scaled = [&psi_t[0] * 3.0, &psi_t[1] * 3.0];
    for which in [EnergyEstimate::ThetaQ, EnergyEstimate::ThetaHalf, EnergyEstimate::Gamma] {
        let (l1, r1) = energy_sides(&p, which, &psi_t).unwrap();
        let (l2, r2) = energy_sides(&p, which, &scaled).unwrap();
        assert!(l1 > 0.0 && r1 > 0.0);
        assert!(((l2 / r2) - (l1 / r1)).abs() <= 1e-12 * (l1 / r1));
    }
    let rep = energy_constant_check(&p, EnergyEstimate::Gamma, 4, 2).unwrap();
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
}

#[test]
fn carleman_ratios_finite() {
    let p = small();
    let rep = carleman_ratio_check(&p, 4, 3).unwrap();
    assert!(rep.all_finite, "{:?}", rep.distribution);
    assert!(rep.samples.iter().all(|s| s.lhs >= 0.0 && s.rhs > 0.0));
}

#[test]
fn distribution_quantiles() {
    let d = Distribution::of(&[4.0, 1.0, 3.0, 2.0, f64::INFINITY]);
    assert_eq!(d.count, 4);
    assert_eq!((d.min, d.max), (1.0, 4.0));
    assert_eq!(d.median, 2.5);
    assert_eq!(ratio(0.0, 0.0), None);
    assert_eq!(ratio(1.0, 0.0), Some(f64::INFINITY));
}
