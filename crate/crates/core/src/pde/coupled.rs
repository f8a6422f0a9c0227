//! Linear two-point-in-time systems: forward blocks started from initial data,
//! backward blocks started from terminal data, tied together by node-wise
//! couplings in the source terms.

use super::propagator::Propagator;
use super::state::{Orientation, TwoComponentState};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, BandedMatrix};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sprs::TriMat;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRef {
    Forward(usize),
    Backward(usize),
}

/// `source(to, to_component)(t_k, x_j) += node_weight[j] · time_factor[k] · from(from_component)(t_k, x_j)`.
///
/// Forward targets read their sources on levels `0..n_t`, backward targets on
/// levels `1..=n_t`, matching [`Propagator`].
#[derive(Debug, Clone)]
pub struct Coupling {
    pub from: BlockRef,
    pub from_component: usize,
    pub to: BlockRef,
    pub to_component: usize,
    pub node_weight: Array1<f64>,
    pub time_factor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Space-time banded LU, factored once and reused.
    Direct,
    /// Relaxed forward/backward sweeps.
    FixedPoint,
    /// Direct when it fits the memory budget, otherwise fixed point.
    Auto,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoupledOptions {
    pub backend: Backend,
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    /// Memory budget for the direct backend, in bytes.
    pub memory_budget: usize,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            tol: 1e-12,
            max_iter: 500,
            relaxation: 0.5,
            memory_budget: 1 << 30,
        }
    }
}

/// Data that changes between solves of the same coupled operator.
#[derive(Debug, Clone)]
pub struct CoupledData {
    pub initial: Vec<[Array1<f64>; 2]>,
    pub forward_sources: Vec<Option<TwoComponentState>>,
    pub terminal: Vec<[Array1<f64>; 2]>,
    pub backward_sources: Vec<Option<TwoComponentState>>,
}

impl CoupledData {
    /// All-zero data for `n_forward` / `n_backward` blocks.
    pub fn zeros(n_nodes: usize, n_forward: usize, n_backward: usize) -> Self {
        let z = || [Array1::zeros(n_nodes), Array1::zeros(n_nodes)];
        Self {
            initial: (0..n_forward).map(|_| z()).collect(),
            forward_sources: vec![None; n_forward],
            terminal: (0..n_backward).map(|_| z()).collect(),
            backward_sources: vec![None; n_backward],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub forward: Vec<TwoComponentState>,
    pub backward: Vec<TwoComponentState>,
    /// Relative fixed-point residual `‖S(x) - x‖∞ / ‖x‖∞` of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub backend: Backend,
}

/// Structure of a coupled system; the direct factorization is built on first
/// use and shared by later solves.
#[derive(Debug)]
pub struct CoupledOperator {
    propagator: Arc<Propagator>,
    n_forward: usize,
    n_backward: usize,
    couplings: Vec<Coupling>,
    opts: CoupledOptions,
    direct: std::sync::OnceLock<std::result::Result<BandedLu, String>>,
}

impl CoupledOperator {
    pub fn new(
        propagator: Arc<Propagator>,
        n_forward: usize,
        n_backward: usize,
        couplings: Vec<Coupling>,
        opts: CoupledOptions,
    ) -> Result<Self> {
        let grid = propagator.grid();
        for c in &couplings {
            for b in [c.from, c.to] {
                let ok = match b {
                    BlockRef::Forward(i) => i < n_forward,
                    BlockRef::Backward(i) => i < n_backward,
                };
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "coupling refers to missing block {b:?}"
                    )));
                }
            }
            if c.node_weight.len() != grid.n_nodes() || c.time_factor.len() != grid.n_levels() {
                return Err(Error::GridMismatch("coupling weights".into()));
            }
            if c.from_component > 1 || c.to_component > 1 {
                return Err(Error::InvalidParameter("component index must be 0 or 1".into()));
            }
        }
        Ok(Self {
            propagator,
            n_forward,
            n_backward,
            couplings,
            opts,
            direct: std::sync::OnceLock::new(),
        })
    }

    pub fn propagator(&self) -> &Arc<Propagator> {
        &self.propagator
    }

    pub fn options(&self) -> CoupledOptions {
        self.opts
    }

    fn n_blocks(&self) -> usize {
        self.n_forward + self.n_backward
    }

    fn block_slot(&self, b: BlockRef) -> usize {
        match b {
            BlockRef::Forward(i) => i,
            BlockRef::Backward(i) => self.n_forward + i,
        }
    }

    /// Bandwidth of the space-time matrix, measured without assembling it.
    fn direct_bandwidth(&self) -> (usize, usize) {
        let grid = self.propagator.grid();
        let nb = self.n_blocks();
        let level = 2 * nb * grid.n_nodes();
        let node_bw = if grid.dim() == 1 { 2 } else { 2 * grid.n_x() };
        let intra = 2 * nb * node_bw + 2 * nb;
        let kl = intra.max(level + 2 * nb);
        (kl, kl)
    }

    pub fn direct_storage_bytes(&self) -> usize {
        let grid = self.propagator.grid();
        let n = grid.n_levels() * 2 * self.n_blocks() * grid.n_nodes();
        let (kl, ku) = self.direct_bandwidth();
        BandedMatrix::storage_bytes(n, kl, ku)
    }

    /// Backend actually used for `Auto`.
    pub fn resolved_backend(&self) -> Backend {
        match self.opts.backend {
            Backend::Auto => {
                if self.direct_storage_bytes() <= self.opts.memory_budget {
                    Backend::Direct
                } else {
                    Backend::FixedPoint
                }
            }
            b => b,
        }
    }

    pub fn solve(&self, data: &CoupledData) -> Result<CoupledSolution> {
        self.check_data(data)?;
        match self.resolved_backend() {
            Backend::FixedPoint => self.solve_fixed_point(data),
            _ => self.solve_direct(data),
        }
    }

    fn check_data(&self, data: &CoupledData) -> Result<()> {
        let n = self.propagator.grid().n_nodes();
        if data.initial.len() != self.n_forward
            || data.forward_sources.len() != self.n_forward
            || data.terminal.len() != self.n_backward
            || data.backward_sources.len() != self.n_backward
        {
            return Err(Error::InvalidParameter(
                "coupled data has the wrong number of blocks".into(),
            ));
        }
        for pair in data.initial.iter().chain(&data.terminal) {
            if pair[0].len() != n || pair[1].len() != n {
                return Err(Error::GridMismatch("initial/terminal data length".into()));
            }
            if !pair.iter().all(|a| a.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite("initial/terminal data"));
            }
        }
        Ok(())
    }

    /// Coupling contributions into block `to`, plus its fixed source.
    fn block_source(
        &self,
        to: BlockRef,
        fixed: Option<&TwoComponentState>,
        forward: &[TwoComponentState],
        backward: &[TwoComponentState],
    ) -> Option<TwoComponentState> {
        let grid = self.propagator.grid();
        let orientation = match to {
            BlockRef::Forward(_) => Orientation::Forward,
            BlockRef::Backward(_) => Orientation::Backward,
        };
        let mut out: Option<TwoComponentState> = fixed.cloned();
        for c in self.couplings.iter().filter(|c| c.to == to) {
            let src = match c.from {
                BlockRef::Forward(i) => &forward[i],
                BlockRef::Backward(i) => &backward[i],
            };
            let acc = out.get_or_insert_with(|| TwoComponentState::zeros(grid, orientation));
            let from = src.component(c.from_component).values();
            let target = acc.component_mut(c.to_component).values_mut();
            for k in 0..grid.n_levels() {
                let tf = c.time_factor[k];
                if tf == 0.0 {
                    continue;
                }
                for j in 0..grid.n_nodes() {
                    let w = c.node_weight[j];
                    if w != 0.0 {
                        target[[k, j]] += w * tf * from[[k, j]];
                    }
                }
            }
        }
        out
    }

    /// One Gauss-Seidel sweep: forward blocks from the current backward
    /// iterate, then backward blocks from the new forward states.
    fn sweep(
        &self,
        data: &CoupledData,
        forward: &[TwoComponentState],
        backward: &[TwoComponentState],
    ) -> Result<(Vec<TwoComponentState>, Vec<TwoComponentState>)> {
        let p = &self.propagator;
        let mut new_f = Vec::with_capacity(self.n_forward);
        for b in 0..self.n_forward {
            let src = self.block_source(
                BlockRef::Forward(b),
                data.forward_sources[b].as_ref(),
                forward,
                backward,
            );
            let init = &data.initial[b];
            new_f.push(p.solve_forward(src.as_ref(), [init[0].view(), init[1].view()])?);
        }
        let mut new_b = Vec::with_capacity(self.n_backward);
        for b in 0..self.n_backward {
            let src = self.block_source(
                BlockRef::Backward(b),
                data.backward_sources[b].as_ref(),
                &new_f,
                backward,
            );
            let term = &data.terminal[b];
            new_b.push(p.solve_backward(src.as_ref(), [term[0].view(), term[1].view()])?);
        }
        Ok((new_f, new_b))
    }

    fn relative_change(
        old: (&[TwoComponentState], &[TwoComponentState]),
        new: (&[TwoComponentState], &[TwoComponentState]),
    ) -> f64 {
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for (a, b) in old.0.iter().zip(new.0).chain(old.1.iter().zip(new.1)) {
            diff = diff.max(a.max_abs_diff(b));
            scale = scale.max(b.max_abs());
        }
        if scale == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / scale
        }
    }

    /// `‖S(x) - x‖∞ / ‖x‖∞` for a candidate solution.
    pub fn residual(
        &self,
        data: &CoupledData,
        forward: &[TwoComponentState],
        backward: &[TwoComponentState],
    ) -> Result<f64> {
        let (f, b) = self.sweep(data, forward, backward)?;
        Ok(Self::relative_change((forward, backward), (&f, &b)))
    }

    fn solve_fixed_point(&self, data: &CoupledData) -> Result<CoupledSolution> {
        let grid = self.propagator.grid();
        let mut w = self.opts.relaxation;
        let mut prev = f64::INFINITY;
        let mut growing = 0;
        let mut fwd: Vec<_> = (0..self.n_forward)
            .map(|_| TwoComponentState::zeros(grid, Orientation::Forward))
            .collect();
        let mut bwd: Vec<_> = (0..self.n_backward)
            .map(|_| TwoComponentState::zeros(grid, Orientation::Backward))
            .collect();
        let mut residual = f64::INFINITY;
        for it in 1..=self.opts.max_iter {
            let (nf, nb) = self.sweep(data, &fwd, &bwd)?;
            residual = Self::relative_change((&fwd, &bwd), (&nf, &nb));
            // relaxation too aggressive for this coupling: back off
            growing = if residual > prev { growing + 1 } else { 0 };
            prev = residual;
            if growing >= 3 {
                w *= 0.5;
                growing = 0;
                log::debug!("fixed-point residual growing, relaxation lowered to {w}");
            }
            for (x, n) in fwd.iter_mut().zip(&nf) {
                *x = x.scaled(1.0 - w);
                x.axpy(w, n);
            }
            for (x, n) in bwd.iter_mut().zip(&nb) {
                *x = x.scaled(1.0 - w);
                x.axpy(w, n);
            }
            if residual <= self.opts.tol {
                // finish with an unrelaxed sweep so the returned pair is consistent
                let (f, b) = self.sweep(data, &fwd, &bwd)?;
                let final_res = Self::relative_change((&fwd, &bwd), (&f, &b));
                return Ok(CoupledSolution {
                    forward: f,
                    backward: b,
                    residual: final_res,
                    iterations: it,
                    backend: Backend::FixedPoint,
                });
            }
        }
        Err(Error::NotConverged {
            method: "fixed-point coupled sweep",
            iterations: self.opts.max_iter,
            residual,
        })
    }

    fn index(&self, level: usize, slot: usize, node: usize, comp: usize) -> usize {
        let nb = self.n_blocks();
        let per_level = 2 * nb * self.propagator.grid().n_nodes();
        level * per_level + node * 2 * nb + slot * 2 + comp
    }

    fn assemble_direct(&self) -> Result<BandedLu> {
        let grid = self.propagator.grid();
        let (n_t, n) = (grid.n_t(), grid.n_nodes());
        let dt = grid.dt();
        let dim = grid.n_levels() * 2 * self.n_blocks() * n;
        let mut tri = TriMat::new((dim, dim));
        let step: Vec<Vec<(usize, usize, f64)>> = if self.propagator.coeffs().is_time_constant() {
            vec![self.propagator.step_triplets(1)]
        } else {
            (1..=n_t).map(|k| self.propagator.step_triplets(k)).collect()
        };
        let step_at = |k: usize| if step.len() == 1 { &step[0] } else { &step[k - 1] };
        let split = |local: usize| (local / 2, local % 2);

        for b in 0..self.n_forward {
            let slot = self.block_slot(BlockRef::Forward(b));
            for j in 0..n {
                for c in 0..2 {
                    let r = self.index(0, slot, j, c);
                    tri.add_triplet(r, r, 1.0);
                }
            }
            for k in 0..n_t {
                for &(p, q, v) in step_at(k + 1) {
                    let (pj, pc) = split(p);
                    let (qj, qc) = split(q);
                    tri.add_triplet(self.index(k + 1, slot, pj, pc), self.index(k + 1, slot, qj, qc), v);
                }
                for j in 0..n {
                    for c in 0..2 {
                        tri.add_triplet(self.index(k + 1, slot, j, c), self.index(k, slot, j, c), -1.0);
                    }
                }
                for cpl in self.couplings.iter().filter(|c| c.to == BlockRef::Forward(b)) {
                    let tf = cpl.time_factor[k];
                    if tf == 0.0 {
                        continue;
                    }
                    let from = self.block_slot(cpl.from);
                    for j in 0..n {
                        let w = cpl.node_weight[j];
                        if w != 0.0 {
                            tri.add_triplet(
                                self.index(k + 1, slot, j, cpl.to_component),
                                self.index(k, from, j, cpl.from_component),
                                -dt * w * tf,
                            );
                        }
                    }
                }
            }
        }
        for b in 0..self.n_backward {
            let slot = self.block_slot(BlockRef::Backward(b));
            for j in 0..n {
                for c in 0..2 {
                    let r = self.index(n_t, slot, j, c);
                    tri.add_triplet(r, r, 1.0);
                }
            }
            for k in (1..=n_t).rev() {
                for &(p, q, v) in step_at(k) {
                    // transpose: row q, column p
                    let (pj, pc) = split(p);
                    let (qj, qc) = split(q);
                    tri.add_triplet(self.index(k - 1, slot, qj, qc), self.index(k - 1, slot, pj, pc), v);
                }
                for j in 0..n {
                    for c in 0..2 {
                        tri.add_triplet(self.index(k - 1, slot, j, c), self.index(k, slot, j, c), -1.0);
                    }
                }
                for cpl in self.couplings.iter().filter(|c| c.to == BlockRef::Backward(b)) {
                    let tf = cpl.time_factor[k];
                    if tf == 0.0 {
                        continue;
                    }
                    let from = self.block_slot(cpl.from);
                    for j in 0..n {
                        let w = cpl.node_weight[j];
                        if w != 0.0 {
                            tri.add_triplet(
                                self.index(k - 1, slot, j, cpl.to_component),
                                self.index(k, from, j, cpl.from_component),
                                -dt * w * tf,
                            );
                        }
                    }
                }
            }
        }
        BandedMatrix::from_sparse(&tri.to_csr()).factor("space-time coupled system")
    }

    fn solve_direct(&self, data: &CoupledData) -> Result<CoupledSolution> {
        let lu = self
            .direct
            .get_or_init(|| self.assemble_direct().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Validation(e.clone()))?;
        let grid = self.propagator.grid();
        let (n_t, n) = (grid.n_t(), grid.n_nodes());
        let dt = grid.dt();
        let mut rhs = vec![0.0; lu.n()];
        for b in 0..self.n_forward {
            let slot = self.block_slot(BlockRef::Forward(b));
            for j in 0..n {
                for c in 0..2 {
                    rhs[self.index(0, slot, j, c)] = data.initial[b][c][j];
                }
            }
            if let Some(f) = &data.forward_sources[b] {
                for k in 0..n_t {
                    for j in 0..n {
                        for c in 0..2 {
                            rhs[self.index(k + 1, slot, j, c)] += dt * f.component(c).get(k, j);
                        }
                    }
                }
            }
        }
        for b in 0..self.n_backward {
            let slot = self.block_slot(BlockRef::Backward(b));
            for j in 0..n {
                for c in 0..2 {
                    rhs[self.index(n_t, slot, j, c)] = data.terminal[b][c][j];
                }
            }
            if let Some(r) = &data.backward_sources[b] {
                for k in 1..=n_t {
                    for j in 0..n {
                        for c in 0..2 {
                            rhs[self.index(k - 1, slot, j, c)] += dt * r.component(c).get(k, j);
                        }
                    }
                }
            }
        }
        lu.solve_in_place(&mut rhs);
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("space-time direct solve"));
        }
        let extract = |slot: usize, orientation: Orientation| {
            let mut s = TwoComponentState::zeros(grid, orientation);
            for k in 0..=n_t {
                for c in 0..2 {
                    let mut row = s.component_mut(c).level_mut(k);
                    for j in 0..n {
                        row[j] = rhs[self.index(k, slot, j, c)];
                    }
                }
            }
            s
        };
        let forward: Vec<_> = (0..self.n_forward)
            .map(|b| extract(self.block_slot(BlockRef::Forward(b)), Orientation::Forward))
            .collect();
        let backward: Vec<_> = (0..self.n_backward)
            .map(|b| extract(self.block_slot(BlockRef::Backward(b)), Orientation::Backward))
            .collect();
        let residual = self.residual(data, &forward, &backward)?;
        Ok(CoupledSolution {
            forward,
            backward,
            residual,
            iterations: 1,
            backend: Backend::Direct,
        })
    }
}
