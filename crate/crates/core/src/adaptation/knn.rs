//! Reference trainer: nearest-neighbor regression over local shape descriptors.
//!
//! Each point is described at several neighborhood radii by the square roots
//! of its covariance eigenvalues and its height above the local centroid
//! along the upward-oriented normal, all divided by the radius. Offsets are
//! stored in a local reference frame (covariance eigenvectors at the largest
//! radius) so that they transfer between differently rotated instances.

use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Predictor, TrainingScene, Trainer};
use crate::geometry::{KdTree, NeighborIndex, Vec3};
use crate::pose::PredictionField;
use crate::simulation::Scene;
use crate::{Error, Result};

const SCALES: usize = 3;
const PER_SCALE: usize = 5;
const DIM: usize = PER_SCALE * SCALES;

type Descriptor = [f64; DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorParams {
    /// Neighborhood radii, fractions of diameter, ascending.
    pub radii: [f64; SCALES],
    /// Radius index whose covariance eigenvectors define the local frame.
    pub frame_scale: usize,
    /// Upper bound on stored training samples (evenly strided).
    pub max_samples: usize,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            radii: [0.08, 0.16, 0.3],
            frame_scale: 1,
            max_samples: 60_000,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<()> {
        let ascending = self.radii.windows(2).all(|w| w[0] < w[1]);
        if !(self.radii[0] > 0.0 && ascending && self.radii.iter().all(|r| r.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "descriptor radii must be positive and ascending, got {:?}",
                self.radii
            )));
        }
        if self.frame_scale >= SCALES {
            return Err(Error::InvalidParameter(format!(
                "frame_scale must be < {SCALES}, got {}",
                self.frame_scale
            )));
        }
        if self.max_samples == 0 {
            return Err(Error::InvalidParameter("max_samples must be ≥ 1".into()));
        }
        Ok(())
    }
}

struct Local {
    descriptor: Descriptor,
    frame: Matrix3<f64>,
}

fn sorted_eigen(cov: Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|k| eig.eigenvalues[k].max(0.0));
    let vectors = Matrix3::from_columns(&order.map(|k| eig.eigenvectors.column(k).into_owned()));
    (values, vectors)
}

fn describe(points: &[Vec3], diameter: f64, params: &DescriptorParams) -> Vec<Local> {
    let index = NeighborIndex::new(points);
    points
        .par_iter()
        .map(|q| {
            let mut descriptor = [0.0; DIM];
            let mut normal = Vec3::z();
            let mut toward = Vec3::zeros();
            let mut fallback = Vec3::x();
            for (s, frac) in params.radii.iter().enumerate() {
                let r = frac * diameter;
                let near = index.within_radius_unsorted(q, r);
                if near.len() < 3 {
                    continue;
                }
                let n = near.len() as f64;
                let c = near.iter().map(|&i| points[i]).sum::<Vec3>() / n;
                let cov = near
                    .iter()
                    .map(|&i| {
                        let d = points[i] - c;
                        d * d.transpose()
                    })
                    .sum::<Matrix3<f64>>()
                    / n;
                let (values, vectors) = sorted_eigen(cov);
                let mut nrm: Vec3 = vectors.column(2).into();
                if nrm.z < 0.0 {
                    nrm = -nrm;
                }
                if s == 0 {
                    normal = nrm;
                }
                let rel = c - q;
                let tangential = rel - nrm * rel.dot(&nrm);
                for k in 0..3 {
                    descriptor[PER_SCALE * s + k] = values[k].sqrt() / r;
                }
                descriptor[PER_SCALE * s + 3] = -rel.dot(&nrm) / r;
                descriptor[PER_SCALE * s + 4] = tangential.norm() / r;
                if s == params.frame_scale {
                    toward = rel;
                    fallback = vectors.column(0).into();
                }
            }
            Local {
                descriptor,
                frame: local_frame(normal, toward, fallback),
            }
        })
        .collect()
}

/// Right-handed frame with third axis `normal` and first axis along the
/// tangential part of `toward` (or of `fallback` when that vanishes).
fn local_frame(normal: Vec3, toward: Vec3, fallback: Vec3) -> Matrix3<f64> {
    let project = |v: Vec3| v - normal * v.dot(&normal);
    let mut e1 = project(toward);
    if e1.norm() < 1e-9 {
        e1 = project(fallback);
    }
    if e1.norm() < 1e-9 {
        e1 = project(if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() });
    }
    let e1 = e1.normalize();
    Matrix3::from_columns(&[e1, normal.cross(&e1), normal])
}

/// Nearest-descriptor keypoint regressor.
#[derive(Debug, Clone)]
pub struct KnnPredictor {
    num_keypoints: usize,
    diameter: f64,
    params: DescriptorParams,
    tree: KdTree<DIM>,
    /// Per sample: local-frame offsets (`num_keypoints` each) then visibility.
    offsets: Vec<Vec3>,
    visibility: Vec<f64>,
}

impl KnnPredictor {
    pub fn samples(&self) -> usize {
        self.visibility.len()
    }
}

impl Predictor for KnnPredictor {
    fn predict(&self, scene: &Scene) -> Result<PredictionField> {
        let pts = &scene.cloud.points;
        let locals = describe(pts, self.diameter, &self.params);
        let hits: Vec<usize> = locals
            .par_iter()
            .map(|l| self.tree.nearest(&l.descriptor).map(|(i, _)| i))
            .collect::<Result<_>>()?;
        let n_k = self.num_keypoints;
        let mut kp = Vec::with_capacity(pts.len() * n_k);
        let mut vis = Vec::with_capacity(pts.len());
        for ((q, l), &h) in pts.iter().zip(&locals).zip(&hits) {
            for o in &self.offsets[h * n_k..(h + 1) * n_k] {
                kp.push(q + l.frame * o);
            }
            vis.push(self.visibility[h]);
        }
        PredictionField::new(n_k, kp, vis)
    }
}

/// Fits a [`KnnPredictor`] on unmasked points. Every keypoint target is the
/// member of its equivalent set nearest to the point.
///
/// `retained` scenes (typically the labeled source domain) are added to
/// every training call alongside the supplied data.
#[derive(Debug, Clone)]
pub struct KnnTrainer {
    pub num_keypoints: usize,
    pub diameter: f64,
    pub params: DescriptorParams,
    pub retained: Vec<TrainingScene>,
}

impl KnnTrainer {
    pub fn new(num_keypoints: usize, diameter: f64) -> Self {
        Self {
            num_keypoints,
            diameter,
            params: DescriptorParams::default(),
            retained: Vec::new(),
        }
    }

    pub fn with_retained(mut self, retained: Vec<TrainingScene>) -> Self {
        self.retained = retained;
        self
    }

    pub fn fit(&self, data: &[TrainingScene]) -> Result<KnnPredictor> {
        self.params.validate()?;
        let n_k = self.num_keypoints;
        let mut descriptors = Vec::new();
        let mut offsets = Vec::new();
        let mut visibility = Vec::new();
        for scene in self.retained.iter().chain(data) {
            if scene.labels.num_points != scene.points.len() {
                return Err(Error::LengthMismatch {
                    what: "pseudo-label points",
                    got: scene.labels.num_points,
                    expected: scene.points.len(),
                });
            }
            let locals = describe(&scene.points, self.diameter, &self.params);
            for (i, (q, l)) in scene.points.iter().zip(&locals).enumerate() {
                let Some(labels) = scene.labels.keypoint_labels(i) else { continue };
                if labels.len() != n_k {
                    return Err(Error::LengthMismatch {
                        what: "keypoint labels",
                        got: labels.len(),
                        expected: n_k,
                    });
                }
                let to_local = l.frame.transpose();
                for equivalents in labels {
                    let target = equivalents
                        .iter()
                        .min_by(|a, b| (*a - q).norm_squared().total_cmp(&(*b - q).norm_squared()))
                        .expect("equivalent sets are nonempty");
                    offsets.push(to_local * (target - q));
                }
                descriptors.push(l.descriptor);
                visibility.push(scene.labels.visibility_label(i));
            }
        }
        if descriptors.is_empty() {
            return Err(Error::InvalidParameter("no unmasked training points".into()));
        }
        let stride = descriptors.len().div_ceil(self.params.max_samples);
        let keep: Vec<usize> = (0..descriptors.len()).step_by(stride).collect();
        Ok(KnnPredictor {
            num_keypoints: n_k,
            diameter: self.diameter,
            params: self.params.clone(),
            tree: KdTree::new(keep.iter().map(|&i| descriptors[i]).collect()),
            offsets: keep.iter().flat_map(|&i| offsets[i * n_k..(i + 1) * n_k].to_vec()).collect(),
            visibility: keep.iter().map(|&i| visibility[i]).collect(),
        })
    }
}

impl Trainer for KnnTrainer {
    fn train(&self, _teacher: &Arc<dyn Predictor>, data: &[TrainingScene]) -> Result<Arc<dyn Predictor>> {
        Ok(Arc::new(self.fit(data)?))
    }
}
