//! Object canonicalization, symmetry-driven keypoint selection and
//! equivalent keypoint sets.
//!
//! A keypoint set is the model centroid plus, for each selected axis, the
//! point where the positive half-axis from the centroid leaves the model's
//! bounding box. Which axes are selected depends on the symmetry class:
//!
//! | class      | axes                                   |
//! |------------|----------------------------------------|
//! | revolution | the rotation axis                      |
//! | finite     | the rotation axis + one seeded other   |
//! | mirror     | the two axes spanning the mirror plane |
//! | no proper  | x, y and z                             |
//!
//! Each keypoint's equivalent set is its orbit under the proper rotation group.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    axis_rotation, centroid, min_bounding_sphere_diameter, AxisAlignedBox, NeighborIndex,
    PointCloud, RigidPose, RotationMatrix, SymmetryClass, SymmetrySpec, Vec3,
};
use crate::{Error, Result};

/// Dedup tolerance for equivalent keypoints.
pub const EQUIVALENT_TOL: f64 = 1e-6;

/// Size of the representative subsample used by pose distances.
pub const EVAL_SUBSAMPLE: usize = 256;

/// A rigid object: surface points, declared symmetry and derived extents.
#[derive(Debug)]
pub struct ObjectModel {
    id: String,
    cloud: PointCloud,
    symmetry: SymmetrySpec,
    bbox: AxisAlignedBox,
    diameter: f64,
    axis_seed: u64,
    eval_seed: u64,
    eval_points: Vec<Vec3>,
    index: OnceLock<NeighborIndex>,
}

impl Clone for ObjectModel {
    fn clone(&self) -> Self {
        Self {
            id: self.id.clone(),
            cloud: self.cloud.clone(),
            symmetry: self.symmetry.clone(),
            bbox: self.bbox,
            diameter: self.diameter,
            axis_seed: self.axis_seed,
            eval_seed: self.eval_seed,
            eval_points: self.eval_points.clone(),
            index: OnceLock::new(),
        }
    }
}

impl ObjectModel {
    /// Builds a model and its derived box, bounding-sphere diameter and
    /// farthest-point representative subsample (seeded by `eval_seed`).
    pub fn new(
        id: impl Into<String>,
        points: Vec<Vec3>,
        symmetry: SymmetrySpec,
        axis_seed: u64,
        eval_seed: u64,
    ) -> Result<Self> {
        let cloud = PointCloud::new(points);
        cloud.validate()?;
        let bbox = AxisAlignedBox::from_points(&cloud.points)?;
        let diameter = min_bounding_sphere_diameter(&cloud.points)?;
        let eval_points = farthest_point_subsample(&cloud.points, EVAL_SUBSAMPLE, eval_seed);
        Ok(Self {
            id: id.into(),
            cloud,
            symmetry,
            bbox,
            diameter,
            axis_seed,
            eval_seed,
            eval_points,
            index: OnceLock::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Vec3] {
        &self.cloud.points
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn symmetry(&self) -> &SymmetrySpec {
        &self.symmetry
    }

    pub fn bbox(&self) -> &AxisAlignedBox {
        &self.bbox
    }

    /// Diameter of the minimum enclosing sphere of the model points.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn axis_seed(&self) -> u64 {
        self.axis_seed
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed
    }

    /// Representative subsample used by pose distances.
    pub fn eval_points(&self) -> &[Vec3] {
        &self.eval_points
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(&self.cloud.points).expect("model is nonempty")
    }

    /// Nearest-neighbor index over the model points, built on first use.
    pub fn index(&self) -> &NeighborIndex {
        self.index.get_or_init(|| NeighborIndex::new(&self.cloud.points))
    }
}

/// Seeded farthest-point sampling. Returns all points when `count ≥ n`.
pub fn farthest_point_subsample(points: &[Vec3], count: usize, seed: u64) -> Vec<Vec3> {
    if points.len() <= count {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.random_range(0..points.len());
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(points[current]);
        let c = points[current];
        let mut next = 0;
        let mut far = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > far {
                far = min_dist[i];
                next = i;
            }
        }
        current = next;
    }
    out
}

/// Rotation taking unit vector `from` onto `to`, identity when already aligned.
fn rotation_onto(from: &Vec3, to: &Vec3) -> RotationMatrix {
    let from = from.normalize();
    if (from - to).norm() <= 1e-15 {
        return RotationMatrix::identity();
    }
    RotationMatrix::rotation_between(&from, to).unwrap_or_else(|| {
        // antiparallel: half-turn about any perpendicular axis
        let perp = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        axis_rotation(&from.cross(&perp), std::f64::consts::PI)
    })
}

/// Canonical-frame rotation for a symmetry spec: rotation axis onto +z, or the
/// two mirror-plane axes onto +x and +z.
fn canonical_rotation(symmetry: &SymmetrySpec) -> Result<RotationMatrix> {
    symmetry.require_axes()?;
    match symmetry.class {
        SymmetryClass::Revolution | SymmetryClass::Finite => {
            Ok(rotation_onto(&symmetry.rotation_axis.expect("checked"), &Vec3::z()))
        }
        SymmetryClass::Mirror => {
            let [a, b] = symmetry.mirror_plane_axes.expect("checked");
            let a = a.normalize();
            let b_perp = b - a * a.dot(&b);
            if b_perp.norm() < 1e-9 {
                return Err(Error::IncompleteSymmetry("mirror plane axes are parallel".into()));
            }
            let b = b_perp.normalize();
            if (a - Vec3::x()).norm() <= 1e-15 && (b - Vec3::z()).norm() <= 1e-15 {
                return Ok(RotationMatrix::identity());
            }
            let m = nalgebra::Matrix3::from_rows(&[a.transpose(), b.cross(&a).transpose(), b.transpose()]);
            Ok(RotationMatrix::from_matrix_unchecked(m))
        }
        SymmetryClass::NoProper => Ok(RotationMatrix::identity()),
    }
}

/// Rotates the model so its symmetry axes coincide with coordinate axes and
/// re-centers it on its centroid. Also returns the applied transform.
pub fn canonicalize_model(model: &ObjectModel) -> Result<(ObjectModel, RigidPose)> {
    let q = canonical_rotation(model.symmetry())?;
    let c = q * model.centroid();
    let transform = RigidPose::new(q, -c);
    let mut symmetry = model.symmetry().conjugated(&q);
    if let Some(axis) = symmetry.rotation_axis.as_mut() {
        *axis = axis.normalize();
    }
    if symmetry.class == SymmetryClass::Mirror {
        symmetry.mirror_plane_axes = Some([Vec3::x(), Vec3::z()]);
    }
    let canonical = ObjectModel::new(
        model.id(),
        transform.transform_points(model.points()),
        symmetry,
        model.axis_seed(),
        model.eval_seed(),
    )?;
    Ok((canonical, transform))
}

/// Axes whose box intersections become keypoints, per symmetry class.
pub fn select_axes(symmetry: &SymmetrySpec, seed: u64) -> Vec<Vec3> {
    match symmetry.class {
        SymmetryClass::Revolution => vec![symmetry.rotation_axis.unwrap_or_else(Vec3::z)],
        SymmetryClass::Finite => {
            let axis = symmetry.rotation_axis.unwrap_or_else(Vec3::z);
            let remaining: Vec<Vec3> = [Vec3::x(), Vec3::y(), Vec3::z()]
                .into_iter()
                .filter(|c| c.dot(&axis).abs() < 0.5)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pick = rng.random_range(0..remaining.len());
            vec![axis, remaining[pick]]
        }
        SymmetryClass::Mirror => symmetry
            .mirror_plane_axes
            .map(|a| a.to_vec())
            .unwrap_or_else(|| vec![Vec3::x(), Vec3::z()]),
        SymmetryClass::NoProper => vec![Vec3::x(), Vec3::y(), Vec3::z()],
    }
}

/// Orbit of `k` under the symmetry group, deduplicated within [`EQUIVALENT_TOL`].
/// `k` itself is always the first member.
pub fn equivalent_set(k: &Vec3, symmetry: &SymmetrySpec) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    for g in symmetry.elements() {
        let p = g * k;
        if !out.iter().any(|q| (q - p).norm() <= EQUIVALENT_TOL) {
            out.push(p);
        }
    }
    out
}

/// Canonical keypoints with their equivalent sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    #[serde(with = "vec3_list")]
    pub keypoints: Vec<Vec3>,
    #[serde(with = "vec3_nested")]
    pub equivalents: Vec<Vec<Vec3>>,
    #[serde(with = "vec3_list")]
    pub axes: Vec<Vec3>,
    pub axis_seed: u64,
}

impl KeypointSet {
    /// Number of keypoint types (centroid included).
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Keypoints with every equivalent set collapsed to the canonical member.
    pub fn without_equivalents(&self) -> KeypointSet {
        KeypointSet {
            equivalents: self.keypoints.iter().map(|k| vec![*k]).collect(),
            ..self.clone()
        }
    }

    /// Selects axes with the model's recorded seed and builds the keypoint set.
    pub fn for_model(model: &ObjectModel) -> Result<KeypointSet> {
        select_keypoints(model, &select_axes(model.symmetry(), model.axis_seed()))
    }
}

/// Centroid plus the positive half-axis/box intersection for every axis.
pub fn select_keypoints(model: &ObjectModel, axes: &[Vec3]) -> Result<KeypointSet> {
    let center = model.centroid();
    let scale = model.bbox().extent().norm().max(f64::MIN_POSITIVE);
    let mut keypoints = vec![center];
    for axis in axes {
        let dir = axis.normalize();
        let hit = model
            .bbox()
            .ray_exit(&center, &dir)
            .filter(|h| (h - center).norm() > 1e-12 * scale)
            .ok_or(Error::DegenerateBox { axis: dir.into() })?;
        keypoints.push(hit);
    }
    let equivalents = keypoints.iter().map(|k| equivalent_set(k, model.symmetry())).collect();
    Ok(KeypointSet {
        keypoints,
        equivalents,
        axes: axes.iter().map(|a| a.normalize()).collect(),
        axis_seed: model.axis_seed(),
    })
}

mod vec3_list {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.x, p.y, p.z]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let raw = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(raw.into_iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect())
    }
}

mod vec3_nested {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<Vec3>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|set| set.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Vec3>>, D::Error> {
        let raw = Vec::<Vec<[f64; 3]>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|set| set.into_iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect())
            .collect())
    }
}
