use super::grid::SpaceTimeGrid;
use crate::error::{Error, Result};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which subdomain a mask represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Omega,
    Omega1,
    Omega2,
    Od,
    OmegaPrime,
    Custom,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionLabel::Omega => "omega",
            RegionLabel::Omega1 => "omega1",
            RegionLabel::Omega2 => "omega2",
            RegionLabel::Od => "Od",
            RegionLabel::OmegaPrime => "omega_prime",
            RegionLabel::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Open axis-aligned box given by per-axis intervals `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub intervals: Vec<[f64; 2]>,
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            intervals: vec![[lo, hi]],
        }
    }

    pub fn rect(x: [f64; 2], y: [f64; 2]) -> Self {
        Self { intervals: vec![x, y] }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    /// Closed-box membership.
    pub fn contains_closed(&self, p: [f64; 2]) -> bool {
        const SLACK: f64 = 1e-12;
        self.intervals
            .iter()
            .enumerate()
            .all(|(k, [lo, hi])| p[k] >= lo - SLACK && p[k] <= hi + SLACK)
    }

    /// Open boxes overlap with positive measure.
    pub fn intersects(&self, other: &Region) -> bool {
        self.intervals
            .iter()
            .zip(&other.intervals)
            .all(|(a, b)| a[0].max(b[0]) < a[1].min(b[1]))
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        if !self.intersects(other) {
            return None;
        }
        Some(Region {
            intervals: self
                .intervals
                .iter()
                .zip(&other.intervals)
                .map(|(a, b)| [a[0].max(b[0]), a[1].min(b[1])])
                .collect(),
        })
    }

    /// `closure(self) ⊂ other` (strict containment on every face).
    pub fn closure_inside(&self, other: &Region) -> bool {
        self.intervals
            .iter()
            .zip(&other.intervals)
            .all(|(a, b)| a[0] > b[0] && a[1] < b[1])
    }

    pub fn centroid(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (k, [lo, hi]) in self.intervals.iter().enumerate() {
            c[k] = 0.5 * (lo + hi);
        }
        c
    }

    /// Box shrunk about its centroid by `factor` per axis.
    pub fn shrunk(&self, factor: f64) -> Region {
        Region {
            intervals: self
                .intervals
                .iter()
                .map(|[lo, hi]| {
                    let mid = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo) * factor;
                    [mid - half, mid + half]
                })
                .collect(),
        }
    }

    fn validate(&self, label: RegionLabel) -> Result<()> {
        for [lo, hi] in &self.intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidRegion {
                    label: label.to_string(),
                    reason: format!("interval ({lo}, {hi}) is empty or not finite"),
                });
            }
        }
        Ok(())
    }
}

/// Node-wise 0/1 characteristic function of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    indicator: Array1<f64>,
    label: RegionLabel,
    region: Region,
}

impl RegionMask {
    /// A node is flagged iff its coordinates lie in the closed region.
    pub fn new(grid: &SpaceTimeGrid, region: &Region, label: RegionLabel) -> Result<Self> {
        if region.dim() != grid.dim() {
            return Err(Error::InvalidRegion {
                label: label.to_string(),
                reason: format!("region has {} axes, grid has {}", region.dim(), grid.dim()),
            });
        }
        region.validate(label)?;
        let indicator = Array1::from_shape_fn(grid.n_nodes(), |j| {
            if region.contains_closed(grid.coords(j)) {
                1.0
            } else {
                0.0
            }
        });
        if indicator.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidRegion {
                label: label.to_string(),
                reason: "region contains no interior grid node".into(),
            });
        }
        Ok(Self {
            indicator,
            label,
            region: region.clone(),
        })
    }

    pub fn indicator(&self) -> &Array1<f64> {
        &self.indicator
    }

    pub fn label(&self) -> RegionLabel {
        self.label
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn contains(&self, node: usize) -> bool {
        self.indicator[node] != 0.0
    }

    pub fn count(&self) -> usize {
        self.indicator.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicator
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
    }

    /// No node flagged by both masks.
    pub fn disjoint_from(&self, other: &RegionMask) -> bool {
        self.indicator
            .iter()
            .zip(other.indicator.iter())
            .all(|(a, b)| *a == 0.0 || *b == 0.0)
    }

    pub fn overlaps(&self, other: &RegionMask) -> bool {
        !self.disjoint_from(other)
    }
}

/// `ω_i ∩ ω = ∅`, checked geometrically and on the node masks.
pub fn check_disjoint(a: &RegionMask, b: &RegionMask) -> Result<()> {
    if a.region.intersects(&b.region) || a.overlaps(b) {
        return Err(Error::Validation(format!("{} intersects {}", a.label, b.label)));
    }
    Ok(())
}
