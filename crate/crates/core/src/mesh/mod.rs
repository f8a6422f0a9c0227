//! Spatial and temporal discretization.
//!
//! Uniform grids on boxes, the Dirichlet Laplacian and the bilaplacian built
//! as its square (so `y = Δy = 0` holds by construction), node-wise region
//! masks and the discrete inner products every other module integrates with.

mod field;
mod grid;
mod operator;
mod region;

pub use field::{
    inner_product, level_weights, norm_sq, sample_nodes, spatial_inner, spatial_norm, Field, Integration, TimeRule,
    TimeWindow,
};
pub use grid::{BoxDomain, SpaceTimeGrid};
pub use operator::{bilaplacian, dirichlet_laplacian, SparseOperator};
pub use region::{check_disjoint, Region, RegionLabel, RegionMask};
