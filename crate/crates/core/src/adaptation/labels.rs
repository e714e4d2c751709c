use serde::{Deserialize, Serialize};

use super::QualityScore;
use crate::geometry::{RigidPose, Vec3};
use crate::keypoints::KeypointSet;
use crate::pose::PoseEstimate;
use crate::simulation::Scene;

/// Labels for one detected instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub members: Vec<usize>,
    pub pose: RigidPose,
    /// `N_i / N_max` over the scene's detected instances.
    pub visibility: f64,
    pub score: Option<f64>,
    pub accepted: bool,
    /// Per keypoint type, the posed equivalent set.
    #[serde(skip)]
    pub keypoints: Vec<Vec<Vec3>>,
}

/// Per-point pseudo-labels. Points of rejected instances and points outside
/// every instance are masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub num_points: usize,
    pub instances: Vec<LabeledInstance>,
    pub threshold: Option<f64>,
    /// Accepted instance of each point.
    #[serde(skip)]
    point_instance: Vec<Option<usize>>,
}

impl PseudoLabelSet {
    fn build(num_points: usize, instances: Vec<LabeledInstance>, threshold: Option<f64>) -> Self {
        let mut point_instance = vec![None; num_points];
        for (k, inst) in instances.iter().enumerate() {
            if inst.accepted {
                for &i in &inst.members {
                    point_instance[i] = Some(k);
                }
            }
        }
        Self {
            num_points,
            instances,
            threshold,
            point_instance,
        }
    }

    /// Rebuilds derived fields after deserialization.
    pub fn restore(mut self, keypoints: &KeypointSet) -> Self {
        for inst in &mut self.instances {
            inst.keypoints = posed_equivalents(&inst.pose, keypoints);
        }
        Self::build(self.num_points, self.instances, self.threshold)
    }

    pub fn mask(&self, point: usize) -> bool {
        self.point_instance[point].is_some()
    }

    pub fn mask_count(&self) -> usize {
        self.point_instance.iter().filter(|p| p.is_some()).count()
    }

    pub fn accepted(&self) -> usize {
        self.instances.iter().filter(|i| i.accepted).count()
    }

    /// Posed equivalent sets per keypoint type, for unmasked points.
    pub fn keypoint_labels(&self, point: usize) -> Option<&[Vec<Vec3>]> {
        self.point_instance[point].map(|k| self.instances[k].keypoints.as_slice())
    }

    /// Visibility label; 0 for masked points.
    pub fn visibility_label(&self, point: usize) -> f64 {
        self.point_instance[point].map_or(0.0, |k| self.instances[k].visibility)
    }

    pub fn mask_vec(&self) -> Vec<bool> {
        self.point_instance.iter().map(Option::is_some).collect()
    }
}

fn posed_equivalents(pose: &RigidPose, keypoints: &KeypointSet) -> Vec<Vec<Vec3>> {
    keypoints.equivalents.iter().map(|e| pose.transform_points(e)).collect()
}

/// Accepts estimates with `d_i < d_g` and labels their member points.
/// Estimates without a score are rejected.
pub fn make_pseudo_labels(
    num_points: usize,
    estimates: &[PoseEstimate],
    scores: &[QualityScore],
    d_g: f64,
    keypoints: &KeypointSet,
) -> PseudoLabelSet {
    let n_max = estimates.iter().map(|e| e.instance.members.len()).max().unwrap_or(0);
    let instances = estimates
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let score = scores.iter().find(|s| s.estimate == k).map(|s| s.d);
            LabeledInstance {
                members: est.instance.members.clone(),
                pose: est.pose,
                visibility: est.instance.members.len() as f64 / n_max as f64,
                score,
                accepted: score.is_some_and(|d| d < d_g),
                keypoints: posed_equivalents(&est.pose, keypoints),
            }
        })
        .collect();
    PseudoLabelSet::build(num_points, instances, Some(d_g))
}

/// Labels straight from a synthetic scene's ground truth; every point unmasked.
pub fn ground_truth_labels(scene: &Scene, keypoints: &KeypointSet) -> PseudoLabelSet {
    let instances = (0..scene.num_instances())
        .map(|k| LabeledInstance {
            members: scene.members(k),
            pose: scene.poses[k],
            visibility: scene.visibility[k],
            score: None,
            accepted: true,
            keypoints: posed_equivalents(&scene.poses[k], keypoints),
        })
        .collect();
    PseudoLabelSet::build(scene.cloud.len(), instances, None)
}
