use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lo_k, hi_k]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.length(k)).product()
    }
}

/// Uniform space-time grid.
///
/// Spatial unknowns live on the `n_x` interior nodes of each axis; boundary
/// nodes carry the homogeneous conditions and are eliminated. Interior nodes
/// are numbered with the first axis fastest. Time levels are `t_k = k·dt`,
/// `k = 0..=n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    dim: usize,
    n_x: usize,
    h: Vec<f64>,
    n_t: usize,
    dt: f64,
    horizon: f64,
    domain: BoxDomain,
}

impl SpaceTimeGrid {
    pub fn new(dim: usize, n_x: usize, n_t: usize, horizon: f64, domain: BoxDomain) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!("n_x must be at least 3, got {n_x}")));
        }
        if n_t < 2 {
            return Err(Error::InvalidGrid(format!("n_t must be at least 2, got {n_t}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if domain.dim() != dim || domain.hi.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "domain has {} axes, grid dimension is {dim}",
                domain.dim()
            )));
        }
        for k in 0..dim {
            let len = domain.length(k);
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {k} has non-positive length")));
            }
        }
        let h = (0..dim).map(|k| domain.length(k) / (n_x + 1) as f64).collect();
        Ok(Self {
            dim,
            n_x,
            h,
            n_t,
            dt: horizon / n_t as f64,
            horizon,
            domain,
        })
    }

    /// Unit interval or unit square.
    pub fn unit(dim: usize, n_x: usize, n_t: usize, horizon: f64) -> Result<Self> {
        Self::new(dim, n_x, n_t, horizon, BoxDomain::unit(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Spacing along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Total number of interior spatial nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    /// Number of stored time levels (`n_t + 1`).
    pub fn n_levels(&self) -> usize {
        self.n_t + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.n_t {
            self.horizon
        } else {
            level as f64 * self.dt
        }
    }

    /// Volume element `h^d` of one interior node.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Multi-index of a node (first axis fastest).
    pub fn node_index(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            [node % self.n_x, node / self.n_x]
        }
    }

    pub fn node_from_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            i + j * self.n_x
        }
    }

    /// Physical coordinates of an interior node; unused axes are 0.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let idx = self.node_index(node);
        let mut out = [0.0; 2];
        for k in 0..self.dim {
            out[k] = self.domain.lo[k] + (idx[k] + 1) as f64 * self.h[k];
        }
        out
    }

    pub fn same_shape(&self, other: &SpaceTimeGrid) -> bool {
        self.dim == other.dim && self.n_x == other.n_x && self.n_t == other.n_t
    }

    /// Level index nearest to time `t` (clamped).
    pub fn level_of(&self, t: f64) -> usize {
        let k = (t / self.dt).round();
        (k.max(0.0) as usize).min(self.n_t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_spacing() {
        let g = SpaceTimeGrid::unit(1, 3, 2, 1.0).unwrap();
        assert_eq!(g.h(0), 0.25);
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.coords(0)[0], 0.25);
        assert_eq!(g.coords(2)[0], 0.75);
    }

    #[test]
    fn two_d_square() {
        let g = SpaceTimeGrid::unit(2, 8, 10, 2.0).unwrap();
        assert_eq!(g.n_nodes(), 64);
        assert!((g.dt() - 0.2).abs() < 1e-15);
        assert_eq!(g.time(10), 2.0);
        let [x, y] = g.coords(g.node_from_index(0, 7));
        assert!((x - 1.0 / 9.0).abs() < 1e-15);
        assert!((y - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SpaceTimeGrid::unit(1, 0, 2, 1.0).is_err());
        assert!(SpaceTimeGrid::unit(1, 3, 1, 1.0).is_err());
        assert!(SpaceTimeGrid::unit(3, 3, 2, 1.0).is_err());
        assert!(SpaceTimeGrid::unit(1, 3, 2, 0.0).is_err());
    }

    #[test]
    fn spacing_and_step_invariants() {
        for n_x in [3, 7, 31, 64] {
            let g = SpaceTimeGrid::new(
                1,
                n_x,
                40,
                1.5,
                BoxDomain {
                    lo: vec![-1.0],
                    hi: vec![2.0],
                },
            )
            .unwrap();
            let len = g.h(0) * (n_x + 1) as f64;
            assert!((len - 3.0).abs() <= 1e-12 * 3.0);
            assert_eq!(g.time(g.n_t()), 1.5);
        }
    }
}
