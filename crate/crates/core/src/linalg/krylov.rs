//! Matrix-free Krylov solvers over an arbitrary inner product.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Stop when `‖r‖ ≤ tol · ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual after each iteration, starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// CG only: `½⟨x, Ax⟩ - ⟨b, x⟩` after each iteration.
    pub energy_history: Vec<f64>,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Conjugate gradients for a self-adjoint positive operator.
///
/// `apply(v, out)` writes `A v`; `inner` is the inner product in which `A` is
/// self-adjoint.
pub fn conjugate_gradient<A, I>(
    mut apply: A,
    inner: I,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: KrylovOptions,
) -> Result<KrylovOutcome>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut ax = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        apply(&x, &mut ax)?;
        axpy(&mut r, -1.0, &ax);
    }
    let b_norm = inner(b, b).sqrt();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let energy = |x: &[f64], r: &[f64]| {
        // ½⟨x, Ax⟩ - ⟨b, x⟩ with Ax = b - r
        let xb = inner(x, b);
        let xr = inner(x, r);
        0.5 * (xb - xr) - xb
    };
    let mut rr = inner(&r, &r);
    let mut residual_history = vec![rr.sqrt() / scale];
    let mut energy_history = vec![energy(&x, &r)];
    if b_norm == 0.0 && x0.is_none() {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            converged: true,
            residual_history,
            energy_history,
        });
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut converged = rr.sqrt() <= opts.tol * scale;
    let mut it = 0;
    while !converged && it < opts.max_iter {
        apply(&p, &mut ap)?;
        let pap = inner(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = inner(&r, &r);
        it += 1;
        residual_history.push(rr_new.sqrt() / scale);
        energy_history.push(energy(&x, &r));
        converged = rr_new.sqrt() <= opts.tol * scale;
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(KrylovOutcome {
        x,
        iterations: it,
        converged,
        residual_history,
        energy_history,
    })
}

/// Restarted GMRES with right preconditioning: solves `A P u = b`, `x = P u`.
pub fn gmres<A, P, I>(mut apply: A, mut precond: P, inner: I, b: &[f64], opts: KrylovOptions) -> Result<KrylovOutcome>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
    P: FnMut(&[f64], &mut [f64]),
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let m = opts.restart.max(1);
    let mut x = vec![0.0; n];
    let b_norm = inner(b, b).sqrt();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut residual_history = vec![b_norm / scale];
    if b_norm == 0.0 {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            converged: true,
            residual_history,
            energy_history: Vec::new(),
        });
    }
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut converged = false;
    while total < opts.max_iter && !converged {
        // r = b - A x
        apply(&x, &mut tmp)?;
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = inner(&r, &r).sqrt();
        if beta <= opts.tol * scale {
            converged = true;
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if total >= opts.max_iter {
                break;
            }
            precond(&basis[k], &mut z);
            apply(&z, &mut tmp)?;
            let mut w = tmp.clone();
            for (j, v) in basis.iter().enumerate() {
                let hj = inner(&w, v);
                h[j][k] = hj;
                axpy(&mut w, -hj, v);
            }
            // one reorthogonalization pass keeps the basis clean
            for (j, v) in basis.iter().enumerate() {
                let c = inner(&w, v);
                h[j][k] += c;
                axpy(&mut w, -c, v);
            }
            let wn = inner(&w, &w).sqrt();
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            let res = g[k + 1].abs();
            residual_history.push(res / scale);
            if res <= opts.tol * scale {
                converged = true;
                break;
            }
            if wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for y, then x += P (V y)
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut vy = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut vy, *yj, &basis[j]);
        }
        precond(&vy, &mut z);
        axpy(&mut x, 1.0, &z);
        if k_used == 0 {
            break;
        }
    }
    if converged {
        // report the true residual rather than the Arnoldi estimate
        apply(&x, &mut tmp)?;
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        residual_history.push(inner(&r, &r).sqrt() / scale);
    }
    Ok(KrylovOutcome {
        x,
        iterations: total,
        converged,
        residual_history,
        energy_history: Vec::new(),
    })
}

/// Largest eigenvalue of a self-adjoint positive semidefinite operator.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn power_iteration<A, I>(mut apply: A, inner: I, start: &[f64], max_iter: usize, tol: f64) -> Result<PowerEstimate>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = start.len();
    let norm0 = inner(start, start).sqrt();
    let mut v: Vec<f64> = start.iter().map(|x| x / norm0).collect();
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        apply(&v, &mut w)?;
        let rq = inner(&v, &w);
        let wn = inner(&w, &w).sqrt();
        if wn == 0.0 {
            return Ok(PowerEstimate {
                eigenvalue: 0.0,
                vector: v,
                iterations: it,
                converged: true,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if it > 1 && (rq - lambda).abs() <= tol * rq.abs() {
            return Ok(PowerEstimate {
                eigenvalue: rq,
                vector: v,
                iterations: it,
                converged: true,
            });
        }
        lambda = rq;
    }
    Ok(PowerEstimate {
        eigenvalue: lambda,
        vector: v,
        iterations: max_iter,
        converged: false,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn spd(n: usize, seed: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64 + seed).sin());
        a.transpose() * &a + DMatrix::identity(n, n) * 0.5
    }

    fn op(m: &DMatrix<f64>) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> + '_ {
        move |v, out| {
            let r = m * DVector::from_column_slice(v);
            out.copy_from_slice(r.as_slice());
            Ok(())
        }
    }

    #[test]
    fn cg_solves_spd_and_energy_decreases() {
        let m = spd(30, 0.3);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let opts = KrylovOptions {
            tol: 1e-12,
            max_iter: 200,
            ..Default::default()
        };
        let out = conjugate_gradient(op(&m), dot, &b, None, opts).unwrap();
        assert!(out.converged);
        let exact = m.clone().lu().solve(&DVector::from_vec(b)).unwrap();
        assert!((DVector::from_vec(out.x) - exact).norm() < 1e-8);
        for w in out.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn cg_weighted_inner_product() {
        // A = D^{-1} S is self-adjoint in ⟨u, v⟩_D = Σ d_i u_i v_i
        let s = spd(12, 1.1);
        let d: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let a = DMatrix::from_fn(12, 12, |i, j| s[(i, j)] / d[i]);
        let inner = |u: &[f64], v: &[f64]| u.iter().zip(v).zip(&d).map(|((x, y), w)| x * y * w).sum::<f64>();
        let b = vec![1.0; 12];
        let out = conjugate_gradient(op(&a), inner, &b, None, KrylovOptions::default()).unwrap();
        assert!(out.converged);
        let x = DVector::from_vec(out.x);
        let r = &a * &x - DVector::from_vec(b);
        assert!(r.norm() < 1e-8);
    }

    #[test]
    fn power_finds_top_eigenvalue() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0, 0.5]));
        let est = power_iteration(op(&m), dot, &[1.0; 4], 500, 1e-14).unwrap();
        assert!((est.eigenvalue - 4.0).abs() < 1e-8);
    }

    #[test]
    fn restarted_gmres_converges() {
        let n = 60;
        let a = DMatrix::from_fn(n, n, |i, j| match i as i64 - j as i64 {
            0 => 4.0,
            1 => -1.0,
            -1 => -0.5,
            _ => 0.0,
        });
        let b = vec![1.0; n];
        let opts = KrylovOptions {
            tol: 1e-12,
            max_iter: 500,
            restart: 8,
        };
        let out = gmres(op(&a), |v: &[f64], o: &mut [f64]| o.copy_from_slice(v), dot, &b, opts).unwrap();
        assert!(out.converged);
        assert!(*out.residual_history.last().unwrap() < 1e-11);
    }

    proptest! {
        #[test]
        fn gmres_matches_direct(n in 2usize..25, seed in -3.0f64..3.0, skew in 0.0f64..2.0) {
            let s = spd(n, seed);
            let k = DMatrix::from_fn(n, n, |i, j| if i < j { skew } else if i > j { -skew } else { 0.0 });
            let a = s + k;
            let b: Vec<f64> = (0..n).map(|i| (i as f64 + seed).sin()).collect();
            let diag: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)]).collect();
            let pre = |v: &[f64], out: &mut [f64]| for i in 0..v.len() { out[i] = diag[i] * v[i] };
            // full GMRES terminates in at most n steps
            let opts = KrylovOptions { tol: 1e-12, max_iter: 400, restart: 30 };
            let out = gmres(op(&a), pre, dot, &b, opts).unwrap();
            prop_assert!(out.converged);
            let exact = a.clone().lu().solve(&DVector::from_vec(b)).unwrap();
            let err = (DVector::from_vec(out.x) - &exact).norm();
            prop_assert!(err <= 1e-7 * (1.0 + exact.norm()), "err {err}");
        }
    }
}
