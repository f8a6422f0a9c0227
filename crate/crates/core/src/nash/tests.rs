use super::*;
use crate::mesh::{Integration, SpaceTimeGrid};
use crate::problem::{benchmark_on, HierarchicProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> HierarchicProblem {
    benchmark_on(SpaceTimeGrid::unit(1, 15, 20, 1.0).unwrap())
        .build()
        .unwrap()
}

fn diff_norm(p: &HierarchicProblem, a: &[ControlProfile; 2], b: &[ControlProfile; 2]) -> f64 {
    let g = p.grid();
    let mut s = 0.0;
    for i in 0..2 {
        let mut d = a[i].clone();
        d.axpy(-1.0, &b[i]);
        s += d.inner(g, &d);
    }
    s.sqrt()
}

#[test]
fn lambda_star_is_the_discrete_adjoint() {
    let p = small();
    let g = p.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let h = random_pair(&p, &mut rng);
        let w = random_state(g, &mut rng);
        for i in 0..2 {
            let lhs = apply_lambda(&p, &h[i])
                .unwrap()
                .inner(g, &w, Integration::state())
                .unwrap();
            let rhs = h[i].inner(g, &apply_lambda_star(&p, i, &w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn both_routes_give_the_same_equilibrium() {
    let p = small();
    let op = solve_nash_operator(&p, None).unwrap();
    let opt = solve_nash_optimality(&p, None).unwrap();
    assert!(op.residual < 1e-9, "{}", op.residual);
    assert!(opt.nash.residual < 1e-9, "{}", opt.nash.residual);
    let scale = diff_norm(&p, &op.h, &[follower_zeros(&p, 0), follower_zeros(&p, 1)]);
    assert!(scale > 0.0);
    assert!(diff_norm(&p, &op.h, &opt.nash.h) <= 1e-6 * scale);
}

#[test]
fn equilibrium_is_stationary_and_minimal() {
    let p = small();
    let sol = solve_nash_operator(&p, None).unwrap();
    let rep = check_nash_stationarity(&p, None, &sol.h, 5, 11).unwrap();
    assert!(rep.max <= 10.0 * p.settings().nash_tol, "{}", rep.max);

    // unilateral deviations do not lower either cost
    let y = controlled_state(&p, None, &sol.h).unwrap();
    let base = follower_costs(&p, &y, &sol.h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = random_pair(&p, &mut rng);
    for i in 0..2 {
        let mut h = sol.h.clone();
        let d = dir[i].scaled(1e-2 * sol.h[i].norm(p.grid()) / dir[i].norm(p.grid()));
        h[i].axpy(1.0, &d);
        let y2 = controlled_state(&p, None, &h).unwrap();
        let j = follower_costs(&p, &y2, &h).unwrap();
        assert!(j[i] >= base[i] * (1.0 - 1e-12), "follower {i}: {} < {}", j[i], base[i]);
    }
}

#[test]
fn coercivity_bound_holds_on_samples() {
    let p = small();
    let rep = coercivity_tau(&p).unwrap();
    assert!(rep.holds && rep.tau > 0.0);
    for i in 0..2 {
        assert!(rep.mu[i] > rep.thresholds[i]);
    }
    let s = sample_coercivity(&p, 10, 1).unwrap();
    assert!(s.holds, "{} < {}", s.min_quotient, s.tau);
}
