//! Density-based clustering used for keypoint filtering and instance grouping.

mod dbscan;
mod filter;
mod mean_shift;

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan, ClusterLabeling};
pub use filter::{density, filter_keypoints};
pub use mean_shift::{mean_shift, MeanShift};

use crate::{Error, Result};

/// Clustering hyperparameters. Lengths are fractions of the object's
/// bounding-sphere diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// DBSCAN radius.
    pub eps: f64,
    /// DBSCAN core threshold; `None` means `max(3, ⌈0.05·N⌉)` for `N` predictions.
    pub min_pts: Option<usize>,
    /// Mean shift window radius.
    pub bandwidth: f64,
    pub max_iters: usize,
    /// Mean shift stops once a seed moves less than this.
    pub convergence_tol: f64,
    /// Instances with fewer member points are dropped.
    pub min_instance_points: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps: 0.05,
            min_pts: None,
            bandwidth: 0.3,
            max_iters: 100,
            convergence_tol: 1e-4,
            min_instance_points: 10,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.min_pts == Some(0) {
            return Err(Error::InvalidParameter("min_pts must be ≥ 1".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if !(self.convergence_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter("mean shift needs max_iters ≥ 1 and tol > 0".into()));
        }
        Ok(())
    }

    pub fn eps_for(&self, diameter: f64) -> f64 {
        self.eps * diameter
    }

    pub fn bandwidth_for(&self, diameter: f64) -> f64 {
        self.bandwidth * diameter
    }

    pub fn tol_for(&self, diameter: f64) -> f64 {
        self.convergence_tol * diameter
    }

    pub fn min_pts_for(&self, n: usize) -> usize {
        self.min_pts
            .unwrap_or_else(|| 3.max((0.05 * n as f64).ceil() as usize))
    }
}
