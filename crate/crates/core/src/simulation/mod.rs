//! Desk-scale bin-picking scenes: random placement, top-down z-buffer
//! occlusion, oracle keypoint predictions and domain shift.

mod oracle;
mod shift;
mod zoo;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use oracle::{oracle_predictor, NoiseModel, OraclePredictor};
pub use shift::{domain_shift, ShiftParams};
pub use zoo::{zoo_object, SPACING_FRAC, ZOO_NAMES};

use crate::geometry::{random_rotation, AxisAlignedBox, PointCloud, RigidPose, Vec3};
use crate::keypoints::ObjectModel;
use crate::{Error, Result};

/// A labeled scene. Every cloud point carries the id of the instance it was
/// sampled from and that instance's visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub poses: Vec<RigidPose>,
    /// `V_i = N_i / N_max` per instance.
    pub visibility: Vec<f64>,
    pub bin: AxisAlignedBox,
    pub seed: u64,
}

impl Scene {
    /// Assembles a scene from labeled points, deriving visibilities from the
    /// per-instance point counts.
    pub fn from_labeled(points: Vec<Vec3>, ids: Vec<u32>, poses: Vec<RigidPose>, bin: AxisAlignedBox, seed: u64) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= poses.len()) {
            return Err(Error::InvalidParameter(format!(
                "instance id {bad} has no pose ({} poses)",
                poses.len()
            )));
        }
        let visibility = visibility_from_ids(&ids, poses.len());
        let per_point = ids.iter().map(|&id| visibility[id as usize]).collect();
        let cloud = PointCloud::new(points).with_instance_ids(ids)?.with_visibility(per_point)?;
        Ok(Self {
            cloud,
            poses,
            visibility,
            bin,
            seed,
        })
    }

    pub fn num_instances(&self) -> usize {
        self.poses.len()
    }

    pub fn instance_ids(&self) -> &[u32] {
        self.cloud.instance_ids.as_deref().unwrap_or(&[])
    }

    /// Surviving point count per instance.
    pub fn counts(&self) -> Vec<usize> {
        counts(self.instance_ids(), self.poses.len())
    }

    /// Ground-truth visibility of every point.
    pub fn point_visibility(&self) -> Vec<f64> {
        self.instance_ids().iter().map(|&id| self.visibility[id as usize]).collect()
    }

    /// Point indices of one instance, ascending.
    pub fn members(&self, instance: usize) -> Vec<usize> {
        self.instance_ids()
            .iter()
            .enumerate()
            .filter(|(_, &id)| id as usize == instance)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the id/pose/visibility invariants.
    pub fn validate(&self) -> Result<()> {
        self.cloud.validate()?;
        let ids = self.cloud.instance_ids.as_ref().ok_or_else(|| {
            Error::InvalidParameter("scene cloud has no instance ids".into())
        })?;
        if self.visibility.len() != self.poses.len() {
            return Err(Error::LengthMismatch {
                what: "instance visibility",
                got: self.visibility.len(),
                expected: self.poses.len(),
            });
        }
        if ids.iter().any(|&id| id as usize >= self.poses.len()) {
            return Err(Error::InvalidParameter("instance id without pose".into()));
        }
        Ok(())
    }
}

fn counts(ids: &[u32], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &id in ids {
        c[id as usize] += 1;
    }
    c
}

pub(crate) fn visibility_from_ids(ids: &[u32], n: usize) -> Vec<f64> {
    let c = counts(ids, n);
    let max = c.iter().copied().max().unwrap_or(0);
    c.iter()
        .map(|&k| if max == 0 { 0.0 } else { k as f64 / max as f64 })
        .collect()
}

/// Placement and rendering parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_instances: usize,
    /// Bin in scene units; `None` means `[0, 3d] × [0, 3d] × [0, d]`.
    pub bin: Option<AxisAlignedBox>,
    /// Depth grid cells per side.
    pub grid_resolution: usize,
    /// Minimum centroid distance between instances, fraction of diameter.
    pub min_separation: f64,
    /// Placement attempts per instance.
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_instances: 10,
            bin: None,
            grid_resolution: 128,
            min_separation: 0.5,
            max_attempts: 1000,
        }
    }
}

impl SceneConfig {
    pub fn bin_for(&self, diameter: f64) -> AxisAlignedBox {
        self.bin.unwrap_or(AxisAlignedBox {
            min: Vec3::zeros(),
            max: Vec3::new(3.0 * diameter, 3.0 * diameter, diameter),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::InvalidParameter("n_instances must be ≥ 1".into()));
        }
        if self.grid_resolution == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidParameter("grid_resolution and max_attempts must be ≥ 1".into()));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::InvalidParameter("min_separation must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Places `n_instances` randomly rotated copies of `model` in the bin and
/// renders them through the depth grid.
pub fn synth_scene(model: &ObjectModel, config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let d = model.diameter();
    let bin = config.bin_for(d);
    let extent = bin.extent();
    if extent.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidParameter("bin has zero volume".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = config.min_separation * d;
    let mut poses: Vec<RigidPose> = Vec::with_capacity(config.n_instances);
    for placed in 0..config.n_instances {
        let mut accepted = None;
        for _ in 0..config.max_attempts {
            let rotation = random_rotation(&mut rng);
            let t = bin.min
                + Vec3::new(
                    rng.random::<f64>() * extent.x,
                    rng.random::<f64>() * extent.y,
                    rng.random::<f64>() * extent.z,
                );
            let center = rotation * model.centroid() + t;
            let clear = poses
                .iter()
                .all(|p| (p.transform_point(&model.centroid()) - center).norm() >= min_sep);
            if clear {
                accepted = Some(RigidPose::new(rotation, t));
                break;
            }
        }
        match accepted {
            Some(p) => poses.push(p),
            None => {
                return Err(Error::BinOverfull {
                    placed,
                    attempts: config.max_attempts,
                })
            }
        }
    }
    render_scene(model, poses, bin, config.grid_resolution, seed)
}

/// Renders posed copies of `model` with a top-down z-buffer over the bin's
/// xy extent: each grid cell keeps the single highest point (ties: lower
/// instance, then lower model point index). Points are emitted in cell order.
pub fn render_scene(
    model: &ObjectModel,
    poses: Vec<RigidPose>,
    bin: AxisAlignedBox,
    resolution: usize,
    seed: u64,
) -> Result<Scene> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("grid resolution must be ≥ 1".into()));
    }
    let extent = bin.extent();
    let (cw, ch) = (extent.x / resolution as f64, extent.y / resolution as f64);
    let mut grid: Vec<Option<(f64, u32, Vec3)>> = vec![None; resolution * resolution];
    for (inst, pose) in poses.iter().enumerate() {
        for p in model.points() {
            let q = pose.transform_point(p);
            let (u, v) = ((q.x - bin.min.x) / cw, (q.y - bin.min.y) / ch);
            if !(u >= 0.0 && v >= 0.0) {
                continue;
            }
            let (iu, iv) = (u as usize, v as usize);
            if iu >= resolution || iv >= resolution {
                continue;
            }
            let cell = &mut grid[iv * resolution + iu];
            if cell.is_none_or(|(z, _, _)| q.z > z) {
                *cell = Some((q.z, inst as u32, q));
            }
        }
    }
    let (points, ids): (Vec<Vec3>, Vec<u32>) = grid.into_iter().flatten().map(|(_, id, q)| (q, id)).unzip();
    Scene::from_labeled(points, ids, poses, bin, seed)
}
