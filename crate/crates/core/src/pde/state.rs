use crate::error::{Error, Result};
use crate::mesh::{inner_product, Field, Integration, SpaceTimeGrid};
use ndarray::{Array1, ArrayView1};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Initial data given, marched forward.
    Forward,
    /// Terminal data given, marched backward.
    Backward,
}

/// Pair of fields `(c1, c2)` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoComponentState {
    pub c1: Field,
    pub c2: Field,
    pub orientation: Orientation,
}

const MAGIC: &[u8; 8] = b"HCTRAJ01";

impl TwoComponentState {
    pub fn zeros(grid: &SpaceTimeGrid, orientation: Orientation) -> Self {
        Self {
            c1: Field::zeros(grid),
            c2: Field::zeros(grid),
            orientation,
        }
    }

    pub fn new(c1: Field, c2: Field, orientation: Orientation) -> Self {
        Self { c1, c2, orientation }
    }

    pub fn component(&self, c: usize) -> &Field {
        match c {
            0 => &self.c1,
            _ => &self.c2,
        }
    }

    pub fn component_mut(&mut self, c: usize) -> &mut Field {
        match c {
            0 => &mut self.c1,
            _ => &mut self.c2,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.c1.n_levels()
    }

    pub fn n_nodes(&self) -> usize {
        self.c1.n_nodes()
    }

    /// Level `k` interleaved per node: `[c1(0), c2(0), c1(1), ...]`.
    pub fn level_vector(&self, k: usize) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; 2 * n];
        for j in 0..n {
            out[2 * j] = self.c1.get(k, j);
            out[2 * j + 1] = self.c2.get(k, j);
        }
        out
    }

    pub fn set_level(&mut self, k: usize, v: &[f64]) {
        let n = self.n_nodes();
        let mut a = self.c1.level_mut(k);
        for j in 0..n {
            a[j] = v[2 * j];
        }
        let mut b = self.c2.level_mut(k);
        for j in 0..n {
            b[j] = v[2 * j + 1];
        }
    }

    pub fn level_pair(&self, k: usize) -> [Array1<f64>; 2] {
        [self.c1.level(k).to_owned(), self.c2.level(k).to_owned()]
    }

    pub fn axpy(&mut self, a: f64, other: &TwoComponentState) {
        self.c1.axpy(a, &other.c1);
        self.c2.axpy(a, &other.c2);
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            c1: self.c1.scaled(a),
            c2: self.c2.scaled(a),
            orientation: self.orientation,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.c1.max_abs().max(self.c2.max_abs())
    }

    pub fn max_abs_diff(&self, other: &TwoComponentState) -> f64 {
        self.c1.max_abs_diff(&other.c1).max(self.c2.max_abs_diff(&other.c2))
    }

    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.c1.is_zero() && self.c2.is_zero()
    }

    /// `⟨self, other⟩` summed over both components.
    pub fn inner(&self, grid: &SpaceTimeGrid, other: &TwoComponentState, over: Integration<'_>) -> Result<f64> {
        Ok(inner_product(grid, &self.c1, &other.c1, over)? + inner_product(grid, &self.c2, &other.c2, over)?)
    }

    /// CSV with columns `t, x[, y], c1, c2`.
    pub fn write_csv<W: Write>(&self, grid: &SpaceTimeGrid, mut w: W) -> std::io::Result<()> {
        if grid.dim() == 1 {
            writeln!(w, "t,x,c1,c2")?;
        } else {
            writeln!(w, "t,x,y,c1,c2")?;
        }
        for k in 0..self.n_levels() {
            let t = grid.time(k);
            for j in 0..self.n_nodes() {
                let p = grid.coords(j);
                write!(w, "{t:.16e},{:.16e},", p[0])?;
                if grid.dim() == 2 {
                    write!(w, "{:.16e},", p[1])?;
                }
                writeln!(w, "{:.16e},{:.16e}", self.c1.get(k, j), self.c2.get(k, j))?;
            }
        }
        Ok(())
    }

    /// Binary dump, little endian: the 8-byte magic `HCTRAJ01`, then `u64`
    /// dim, n_x, n_levels, n_nodes, n_components (= 2), then `f64` horizon,
    /// then all values row-major as `[component][level][node]`.
    pub fn write_binary<W: Write>(&self, grid: &SpaceTimeGrid, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [grid.dim(), grid.n_x(), self.n_levels(), self.n_nodes(), 2] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&grid.horizon().to_le_bytes())?;
        for f in [&self.c1, &self.c2] {
            for v in f.values().iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`write_binary`](Self::write_binary).
    pub fn read_binary<R: Read>(mut r: R, orientation: Orientation) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Validation("not a trajectory dump".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0usize; 5];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word) as usize;
        }
        r.read_exact(&mut word)?;
        let [_, _, n_levels, n_nodes, n_comp] = header;
        if n_comp != 2 {
            return Err(Error::Validation(format!("expected 2 components, found {n_comp}")));
        }
        let mut read_field = || -> Result<Field> {
            let mut data = Vec::with_capacity(n_levels * n_nodes);
            for _ in 0..n_levels * n_nodes {
                r.read_exact(&mut word)?;
                data.push(f64::from_le_bytes(word));
            }
            let arr = ndarray::Array2::from_shape_vec((n_levels, n_nodes), data)
                .map_err(|e| Error::Validation(e.to_string()))?;
            Ok(Field::from_array(arr))
        };
        let c1 = read_field()?;
        let c2 = read_field()?;
        Ok(Self { c1, c2, orientation })
    }
}

/// Spatial pair `(v1, v2)` as an interleaved vector.
pub fn interleave(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Vec<f64> {
    let mut out = vec![0.0; 2 * a.len()];
    for j in 0..a.len() {
        out[2 * j] = a[j];
        out[2 * j + 1] = b[j];
    }
    out
}

pub fn deinterleave(v: &[f64]) -> [Array1<f64>; 2] {
    let n = v.len() / 2;
    [
        Array1::from_shape_fn(n, |j| v[2 * j]),
        Array1::from_shape_fn(n, |j| v[2 * j + 1]),
    ]
}
