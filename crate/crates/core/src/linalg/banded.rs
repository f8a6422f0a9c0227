use crate::error::{Error, Result};
use sprs::CsMat;

/// General band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns on
/// the right hold the fill produced by row interchanges during factorization.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Copy a square CSR/CSC matrix; bandwidths are measured from its pattern.
    pub fn from_sparse(m: &CsMat<f64>) -> Self {
        let n = m.rows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for (v, (r, c)) in m.iter() {
            if *v != 0.0 {
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let mut out = Self::zeros(n, kl, ku);
        for (v, (r, c)) in m.iter() {
            out.add(r, c, *v);
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    /// Bytes held by the band storage.
    pub fn storage_bytes(n: usize, kl: usize, ku: usize) -> usize {
        n * (2 * kl + ku + 1) * std::mem::size_of::<f64>()
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    /// `A[i, j] += v`. Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> BandedMatrix {
        let mut t = BandedMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                let v = self.data[self.slot(i, j)];
                if v != 0.0 {
                    t.add(j, i, v);
                }
            }
        }
        t
    }

    /// LU with partial pivoting, in place.
    pub fn factor(mut self, context: &'static str) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { context, pivot: k });
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let inv = 1.0 / self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let l = self.data[sik] * inv;
                self.data[sik] = l;
                if l == 0.0 {
                    continue;
                }
                let row_k = self.slot(k, k + 1);
                let row_i = self.slot(i, k + 1);
                let len = last_col - k;
                for off in 0..len {
                    self.data[row_i + off] -= l * self.data[row_k + off];
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

/// Factors from [`BandedMatrix::factor`]; solves reuse them.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.data[a.slot(i, k)] * bk;
                }
            }
        }
        let reach = a.kl + a.ku;
        for k in (0..n).rev() {
            let hi = (k + reach).min(n - 1);
            let base = a.slot(k, k);
            let mut s = b[k];
            for j in k + 1..=hi {
                s -= a.data[base + (j - k)] * b[j];
            }
            b[k] = s / a.data[base];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn to_dense(m: &BandedMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(m.n(), m.n(), |i, j| m.get(i, j))
    }

    fn random_band(n: usize, kl: usize, ku: usize, vals: &[f64], diag_shift: f64) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(n, kl, ku);
        let mut it = vals.iter().cycle();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.add(i, j, *it.next().unwrap());
            }
            m.add(i, i, diag_shift);
        }
        m
    }

    #[test]
    fn needs_pivoting() {
        // zero leading pivot
        let mut m = BandedMatrix::zeros(3, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 1.0);
        m.add(1, 2, 1.0);
        m.add(2, 1, 1.0);
        m.add(2, 2, 3.0);
        let dense = to_dense(&m);
        let lu = m.factor("test").unwrap();
        let mut b = vec![1.0, 2.0, 3.0];
        lu.solve_in_place(&mut b);
        let x = DVector::from_vec(b);
        let r = &dense * &x - DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let m = BandedMatrix::zeros(4, 1, 1);
        assert!(matches!(m.factor("zero"), Err(Error::Singular { pivot: 0, .. })));
    }

    #[test]
    fn transpose_matches_dense() {
        let m = random_band(6, 2, 1, &[0.3, -1.2, 0.7, 2.5, -0.4], 0.0);
        assert_eq!(to_dense(&m.transpose()), to_dense(&m).transpose());
    }

    proptest! {
        #[test]
        fn solve_agrees_with_dense_lu(
            n in 1usize..40,
            kl in 0usize..5,
            ku in 0usize..5,
            vals in prop::collection::vec(-1.0f64..1.0, 7..30),
            shift in prop_oneof![Just(0.0), -3.0f64..3.0],
            rhs_seed in -1.0f64..1.0,
        ) {
            let m = random_band(n, kl, ku, &vals, shift);
            let dense = to_dense(&m);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7 + rhs_seed).sin()).collect();
            let oracle = dense.clone().lu();
            let Some(xo) = oracle.solve(&DVector::from_column_slice(&b)) else { return Ok(()); };
            let cond_proxy = dense.norm() * oracle.try_inverse().map(|inv| inv.norm()).unwrap_or(f64::INFINITY);
            prop_assume!(cond_proxy < 1e8);
            let lu = m.factor("prop").unwrap();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            let diff = (DVector::from_vec(x) - &xo).norm();
            prop_assert!(diff <= 1e-9 * (1.0 + xo.norm()), "diff {diff}");
        }
    }
}
