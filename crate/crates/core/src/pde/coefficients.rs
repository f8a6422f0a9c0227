use crate::error::{Error, Result};
use crate::mesh::{Field, RegionMask, SpaceTimeGrid};
use serde::Serialize;

/// Zero-order coupling matrix `(a_ij)` sampled on every space-time node.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    a: [[Field; 2]; 2],
    time_constant: bool,
}

/// Outcome of checking `a21 ≥ a0 > 0` or `-a21 ≥ a0 > 0` on a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignCertificate {
    pub holds: bool,
    /// `+1` or `-1` when the certificate holds, 0 otherwise.
    pub sign: i8,
    /// Largest admissible `a0` (0 when the certificate fails).
    pub a0: f64,
}

impl CoefficientField {
    pub fn constant(grid: &SpaceTimeGrid, a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        let c = |v: f64| Field::from_fn(grid, |_, _| v);
        Self {
            a: [[c(a11), c(a12)], [c(a21), c(a22)]],
            time_constant: true,
        }
    }

    pub fn zero(grid: &SpaceTimeGrid) -> Self {
        Self::constant(grid, 0.0, 0.0, 0.0, 0.0)
    }

    /// From sampled fields; rejects non-finite entries.
    pub fn from_fields(grid: &SpaceTimeGrid, a: [[Field; 2]; 2]) -> Result<Self> {
        for row in &a {
            for f in row {
                if f.n_levels() != grid.n_levels() || f.n_nodes() != grid.n_nodes() {
                    return Err(Error::GridMismatch("coefficient field shape".into()));
                }
                if !f.is_finite() {
                    return Err(Error::NonFinite("coefficient field"));
                }
            }
        }
        let time_constant = a.iter().flatten().all(|f| {
            let first = f.level(0);
            (1..f.n_levels()).all(|k| f.level(k) == first)
        });
        Ok(Self { a, time_constant })
    }

    pub fn get(&self, level: usize, node: usize) -> [[f64; 2]; 2] {
        [
            [self.a[0][0].get(level, node), self.a[0][1].get(level, node)],
            [self.a[1][0].get(level, node), self.a[1][1].get(level, node)],
        ]
    }

    pub fn entry(&self, i: usize, j: usize) -> &Field {
        &self.a[i][j]
    }

    pub fn is_time_constant(&self) -> bool {
        self.time_constant
    }

    /// `‖a_ij‖_∞` over all nodes.
    pub fn sup_norms(&self) -> [[f64; 2]; 2] {
        [
            [self.a[0][0].max_abs(), self.a[0][1].max_abs()],
            [self.a[1][0].max_abs(), self.a[1][1].max_abs()],
        ]
    }

    /// `Σ ‖a_ij‖_∞`.
    pub fn total_sup_norm(&self) -> f64 {
        self.sup_norms().iter().flatten().sum()
    }

    /// Sign certificate for `a21` on `region × (0, T)`.
    pub fn sign_certificate(&self, region: &RegionMask) -> SignCertificate {
        let a21 = &self.a[1][0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..a21.n_levels() {
            for j in region.nodes() {
                let v = a21.get(k, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > 0.0 {
            SignCertificate {
                holds: true,
                sign: 1,
                a0: lo,
            }
        } else if hi < 0.0 {
            SignCertificate {
                holds: true,
                sign: -1,
                a0: -hi,
            }
        } else {
            SignCertificate {
                holds: false,
                sign: 0,
                a0: 0.0,
            }
        }
    }
}
