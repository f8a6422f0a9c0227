use super::grid::SpaceTimeGrid;
use ndarray::{Array1, ArrayView1};
use sprs::{CsMat, TriMat};
use std::io::Write;

/// Square sparse matrix over interior spatial nodes.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    matrix: CsMat<f64>,
    symmetric: bool,
    tag: &'static str,
}

impl SparseOperator {
    pub fn new(matrix: CsMat<f64>, tag: &'static str) -> Self {
        let symmetric = is_symmetric(&matrix);
        Self { matrix, symmetric, tag }
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn tag(&self) -> &'static str {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.apply_into(v, out.view_mut().into_slice().unwrap());
        out
    }

    /// `out = self · v`
    pub fn apply_into(&self, v: ArrayView1<f64>, out: &mut [f64]) {
        for (row, vec) in self.matrix.outer_iterator().enumerate() {
            out[row] = vec.iter().map(|(col, a)| a * v[col]).sum();
        }
    }

    /// Operator product `self · rhs`, entrywise as assembled.
    pub fn compose(&self, rhs: &SparseOperator, tag: &'static str) -> SparseOperator {
        let product = &self.matrix * &rhs.matrix;
        SparseOperator::new(product.to_csr(), tag)
    }

    /// Entries `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.matrix.nnz());
        for (row, vec) in self.matrix.outer_iterator().enumerate() {
            for (col, &a) in vec.iter() {
                out.push((row, col, a));
            }
        }
        out
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.matrix.transpose_view().to_csr();
        let mut worst = 0.0f64;
        for (row, vec) in self.matrix.outer_iterator().enumerate() {
            for (col, &a) in vec.iter() {
                worst = worst.max((a - t.get(row, col).copied().unwrap_or(0.0)).abs());
            }
        }
        for (row, vec) in t.outer_iterator().enumerate() {
            for (col, &a) in vec.iter() {
                worst = worst.max((a - self.matrix.get(row, col).copied().unwrap_or(0.0)).abs());
            }
        }
        worst
    }

    /// Coordinate-list debug dump: one `row col value` line per entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }
}

fn is_symmetric(m: &CsMat<f64>) -> bool {
    if m.rows() != m.cols() {
        return false;
    }
    for (row, vec) in m.outer_iterator().enumerate() {
        for (col, &a) in vec.iter() {
            if m.get(col, row).copied() != Some(a) {
                return false;
            }
        }
    }
    true
}

/// Second-order Dirichlet Laplacian on interior nodes (3-point in 1-D,
/// 5-point in 2-D), boundary rows eliminated.
pub fn dirichlet_laplacian(grid: &SpaceTimeGrid) -> SparseOperator {
    let n = grid.n_nodes();
    let n_x = grid.n_x();
    let mut tri = TriMat::new((n, n));
    for node in 0..n {
        let idx = grid.node_index(node);
        let mut diag = 0.0;
        for axis in 0..grid.dim() {
            let w = 1.0 / (grid.h(axis) * grid.h(axis));
            diag -= 2.0 * w;
            if idx[axis] > 0 {
                let mut nb = idx;
                nb[axis] -= 1;
                tri.add_triplet(node, grid.node_from_index(nb[0], nb[1]), w);
            }
            if idx[axis] + 1 < n_x {
                let mut nb = idx;
                nb[axis] += 1;
                tri.add_triplet(node, grid.node_from_index(nb[0], nb[1]), w);
            }
        }
        tri.add_triplet(node, node, diag);
    }
    SparseOperator::new(tri.to_csr(), "dirichlet_laplacian")
}

/// Discrete bilaplacian under `y = Δy = 0`: the Dirichlet Laplacian squared.
pub fn bilaplacian(laplacian: &SparseOperator) -> SparseOperator {
    laplacian.compose(laplacian, "bilaplacian")
}
