//! Inference: visibility filtering, instance grouping, per-type keypoint
//! voting and rigid fitting.

mod fit;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{fit_pose, fit_residual};

use crate::clustering::{filter_keypoints, mean_shift, ClusterParams};
use crate::geometry::{centroid, PointCloud, RigidPose, Vec3};
use crate::keypoints::{KeypointSet, ObjectModel};
use crate::{Error, Result};

/// Per-point keypoint and visibility predictions for one scene.
///
/// Keypoint predictions are absolute positions (point + predicted offset),
/// stored point-major: entry `i * num_keypoints + j` is type `j` for point `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionField {
    num_keypoints: usize,
    #[serde(with = "flat_vec3")]
    keypoints: Vec<Vec3>,
    visibility: Vec<f64>,
}

impl PredictionField {
    pub fn new(num_keypoints: usize, keypoints: Vec<Vec3>, visibility: Vec<f64>) -> Result<Self> {
        let field = Self {
            num_keypoints,
            keypoints,
            visibility,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn empty(num_keypoints: usize) -> Self {
        Self {
            num_keypoints,
            keypoints: Vec::new(),
            visibility: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_keypoints == 0 {
            return Err(Error::InvalidParameter("prediction field needs ≥ 1 keypoint type".into()));
        }
        let expected = self.visibility.len() * self.num_keypoints;
        if self.keypoints.len() != expected {
            return Err(Error::LengthMismatch {
                what: "keypoint predictions",
                got: self.keypoints.len(),
                expected,
            });
        }
        Ok(())
    }

    /// Number of scene points covered.
    pub fn len(&self) -> usize {
        self.visibility.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visibility.is_empty()
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_keypoints
    }

    pub fn keypoint(&self, point: usize, kind: usize) -> Vec3 {
        self.keypoints[point * self.num_keypoints + kind]
    }

    /// All keypoint predictions of one point.
    pub fn point_keypoints(&self, point: usize) -> &[Vec3] {
        &self.keypoints[point * self.num_keypoints..(point + 1) * self.num_keypoints]
    }

    pub fn visibility(&self) -> &[f64] {
        &self.visibility
    }

    /// Type-`kind` predictions of the given points.
    pub fn type_predictions(&self, points: &[usize], kind: usize) -> Vec<Vec3> {
        points.iter().map(|&i| self.keypoint(i, kind)).collect()
    }

    /// Field restricted to the given points, in that order.
    pub fn select(&self, points: &[usize]) -> PredictionField {
        PredictionField {
            num_keypoints: self.num_keypoints,
            keypoints: points.iter().flat_map(|&i| self.point_keypoints(i).to_vec()).collect(),
            visibility: points.iter().map(|&i| self.visibility[i]).collect(),
        }
    }
}

/// A group of scene points believed to be one object instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDetection {
    /// Member scene point indices, ascending.
    pub members: Vec<usize>,
    /// Voted keypoint per type.
    pub voted: Vec<Vec3>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: RigidPose,
    pub confidence: f64,
    pub instance: InstanceDetection,
}

/// Inference switches and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Points with lower predicted visibility are discarded.
    pub v_min: f64,
    pub cluster: ClusterParams,
    /// When false, voting averages all member predictions instead of the
    /// densest DBSCAN cluster.
    pub filtering: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            v_min: 0.25,
            cluster: ClusterParams::default(),
            filtering: true,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.v_min) {
            return Err(Error::InvalidParameter(format!("v_min must lie in [0, 1], got {}", self.v_min)));
        }
        self.cluster.validate()
    }
}

/// Indices of points whose predicted visibility is at least `v_min`.
pub fn visibility_filter(field: &PredictionField, v_min: f64) -> Vec<usize> {
    field
        .visibility
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= v_min)
        .map(|(i, _)| i)
        .collect()
}

/// Groups retained points by mean shift over their predicted centroids
/// (keypoint type 0). Groups smaller than `min_points` are dropped.
pub fn cluster_instances(
    field: &PredictionField,
    retained: &[usize],
    bandwidth: f64,
    max_iters: usize,
    tol: f64,
    min_points: usize,
) -> Vec<Vec<usize>> {
    if retained.is_empty() {
        return Vec::new();
    }
    let centers = field.type_predictions(retained, 0);
    let ms = mean_shift(&centers, bandwidth, max_iters, tol);
    let mut groups = vec![Vec::new(); ms.modes.len()];
    for (k, mode) in ms.assignment.iter().enumerate() {
        if let Some(m) = mode {
            groups[*m].push(retained[k]);
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty() && g.len() >= min_points)
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect()
}

/// One voted keypoint per type: the mean of the densest prediction cluster,
/// or of all predictions when `filtering` is off.
pub fn vote_keypoints(
    members: &[usize],
    field: &PredictionField,
    params: &ClusterParams,
    diameter: f64,
    filtering: bool,
) -> Result<Vec<Vec3>> {
    if members.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let eps = params.eps_for(diameter);
    let min_pts = params.min_pts_for(members.len());
    (0..field.num_keypoints())
        .map(|kind| {
            let preds = field.type_predictions(members, kind);
            if !filtering {
                return Ok(centroid(&preds).expect("nonempty"));
            }
            let keep = filter_keypoints(&preds, eps, min_pts)?;
            let cluster: Vec<Vec3> = keep.iter().map(|&i| preds[i]).collect();
            Ok(centroid(&cluster).expect("cluster nonempty"))
        })
        .collect()
}

/// Full inference on one scene. Instances that fail voting or fitting are
/// omitted. Estimates are ordered by confidence (descending), then by
/// smallest member index.
pub fn estimate_scene(
    scene: &PointCloud,
    field: &PredictionField,
    model: &ObjectModel,
    keypoints: &KeypointSet,
    config: &EstimateConfig,
) -> Result<Vec<PoseEstimate>> {
    if field.len() != scene.len() {
        return Err(Error::LengthMismatch {
            what: "prediction field",
            got: field.len(),
            expected: scene.len(),
        });
    }
    if field.num_keypoints() != keypoints.len() {
        return Err(Error::LengthMismatch {
            what: "keypoint types",
            got: field.num_keypoints(),
            expected: keypoints.len(),
        });
    }
    let d = model.diameter();
    let params = &config.cluster;
    let retained = visibility_filter(field, config.v_min);
    let instances = cluster_instances(
        field,
        &retained,
        params.bandwidth_for(d),
        params.max_iters,
        params.tol_for(d),
        params.min_instance_points,
    );
    let mut estimates: Vec<PoseEstimate> = instances
        .into_par_iter()
        .filter_map(|members| {
            let voted = match vote_keypoints(&members, field, params, d, config.filtering) {
                Ok(v) => v,
                Err(e) => {
                    log::debug!("instance of {} points rejected: {e}", members.len());
                    return None;
                }
            };
            let pose = fit_pose(&voted, &keypoints.keypoints).ok()?;
            let confidence =
                members.iter().map(|&i| field.visibility[i]).sum::<f64>() / members.len() as f64;
            Some(PoseEstimate {
                pose,
                confidence,
                instance: InstanceDetection {
                    members,
                    voted,
                    confidence,
                },
            })
        })
        .collect();
    estimates.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.instance.members[0].cmp(&b.instance.members[0]))
    });
    Ok(estimates)
}

mod flat_vec3 {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.x, p.y, p.z]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?.into_iter().map(Vec3::from).collect())
    }
}
