use crate::error::{Error, Result};
use crate::mesh::{Field, RegionMask, SpaceTimeGrid};
use crate::pde::{Orientation, TwoComponentState};
use std::io::Write;
use std::ops::Range;

/// A scalar control supported on `mask × levels`, acting on the first
/// state component. Values outside the support are kept at zero.
///
/// Controls enter the forward equation as sources, so they are paired with the
/// source rule: `⟨h, k⟩ = Σ_{level ∈ levels} dt Σ_{j ∈ mask} h^d h k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProfile {
    values: Field,
    mask: RegionMask,
    levels: Range<usize>,
}

impl ControlProfile {
    pub fn zeros(grid: &SpaceTimeGrid, mask: &RegionMask, levels: Range<usize>) -> Self {
        Self {
            values: Field::zeros(grid),
            mask: mask.clone(),
            levels,
        }
    }

    /// Follower space: interior levels `1..n_t` where `ρ*` is finite.
    pub fn follower_levels(grid: &SpaceTimeGrid) -> Range<usize> {
        1..grid.n_t()
    }

    /// Leader space: every level the forward scheme reads, `0..n_t`.
    pub fn leader_levels(grid: &SpaceTimeGrid) -> Range<usize> {
        0..grid.n_t()
    }

    /// Restricts `field` to the support.
    pub fn from_field(grid: &SpaceTimeGrid, mut field: Field, mask: &RegionMask, levels: Range<usize>) -> Result<Self> {
        if field.n_levels() != grid.n_levels() || field.n_nodes() != grid.n_nodes() {
            return Err(Error::GridMismatch("control field shape".into()));
        }
        field.restrict(mask);
        {
            let v = field.values_mut();
            for k in 0..grid.n_levels() {
                if !levels.contains(&k) {
                    v.row_mut(k).fill(0.0);
                }
            }
        }
        Ok(Self {
            values: field,
            mask: mask.clone(),
            levels,
        })
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn mask(&self) -> &RegionMask {
        &self.mask
    }

    pub fn levels(&self) -> Range<usize> {
        self.levels.clone()
    }

    /// Number of degrees of freedom.
    pub fn len(&self) -> usize {
        self.mask.count() * self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Degrees of freedom, level-major.
    pub fn to_vec(&self) -> Vec<f64> {
        let nodes: Vec<usize> = self.mask.nodes().collect();
        let mut out = Vec::with_capacity(self.len());
        for k in self.levels.clone() {
            for &j in &nodes {
                out.push(self.values.get(k, j));
            }
        }
        out
    }

    pub fn from_vec(grid: &SpaceTimeGrid, mask: &RegionMask, levels: Range<usize>, v: &[f64]) -> Self {
        let mut out = Self::zeros(grid, mask, levels.clone());
        let nodes: Vec<usize> = mask.nodes().collect();
        assert_eq!(v.len(), nodes.len() * levels.len(), "control vector length");
        let vals = out.values.values_mut();
        let mut it = v.iter();
        for k in levels {
            for &j in &nodes {
                vals[[k, j]] = *it.next().unwrap();
            }
        }
        out
    }

    /// Weight of one degree of freedom in the control inner product.
    pub fn dof_weight(grid: &SpaceTimeGrid) -> f64 {
        grid.dt() * grid.cell_volume()
    }

    pub fn inner(&self, grid: &SpaceTimeGrid, other: &ControlProfile) -> f64 {
        let a = self.values.values();
        let b = other.values.values();
        let mut s = 0.0;
        for k in self.levels.clone() {
            for j in self.mask.nodes() {
                s += a[[k, j]] * b[[k, j]];
            }
        }
        s * Self::dof_weight(grid)
    }

    pub fn norm(&self, grid: &SpaceTimeGrid) -> f64 {
        self.inner(grid, self).sqrt()
    }

    /// Same support, values combined as `self + a·other`.
    pub fn axpy(&mut self, a: f64, other: &ControlProfile) {
        self.values.axpy(a, &other.values);
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.scaled(a),
            mask: self.mask.clone(),
            levels: self.levels.clone(),
        }
    }

    /// Forward source `(h, 0)`.
    pub fn as_source(&self, grid: &SpaceTimeGrid) -> TwoComponentState {
        let mut s = TwoComponentState::zeros(grid, Orientation::Forward);
        s.c1 = self.values.clone();
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.values.max_abs()
    }
}

/// CSV with columns `t, x[, y], <names...>` for controls sharing a grid.
pub fn write_controls_csv<W: Write>(
    grid: &SpaceTimeGrid,
    names: &[&str],
    controls: &[&ControlProfile],
    mut w: W,
) -> std::io::Result<()> {
    write!(w, "t,x")?;
    if grid.dim() == 2 {
        write!(w, ",y")?;
    }
    for n in names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for k in 0..grid.n_levels() {
        let t = grid.time(k);
        for j in 0..grid.n_nodes() {
            let p = grid.coords(j);
            write!(w, "{t:.16e},{:.16e}", p[0])?;
            if grid.dim() == 2 {
                write!(w, ",{:.16e}", p[1])?;
            }
            for c in controls {
                write!(w, ",{:.16e}", c.values().get(k, j))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
