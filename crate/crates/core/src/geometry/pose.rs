use nalgebra::{Matrix3, Unit};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{PointCloud, RotationMatrix, Vec3, ROTATION_TOL};
use crate::{Error, Result};

/// Rigid transform `x ↦ R·x + t` from the object frame into the scene frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn new(rotation: RotationMatrix, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(RotationMatrix::identity(), translation)
    }

    pub fn from_rotation(rotation: RotationMatrix) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rotation = self.rotation.inverse();
        RigidPose {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.transform_point(p)).collect()
    }

    /// Maps every point through the pose; attribute channels are carried over unchanged.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: self.transform_points(&cloud.points),
            instance_ids: cloud.instance_ids.clone(),
            visibility: cloud.visibility.clone(),
        }
    }

    /// Row-major rotation entries.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let m = self.rotation.matrix();
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(r: &[f64; 9], t: &[f64; 3]) -> Result<Self> {
        Ok(Self::new(rotation_from_rows(r)?, Vec3::new(t[0], t[1], t[2])))
    }
}

/// Checks `RᵀR = I` and `det R = +1` within [`ROTATION_TOL`].
pub fn validate_rotation(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidRotation("non-finite entry".into()));
    }
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    if ortho > ROTATION_TOL {
        return Err(Error::InvalidRotation(format!(
            "not orthonormal (max |RᵀR - I| = {ortho:.3e})"
        )));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::InvalidRotation(format!("determinant {det}")));
    }
    Ok(RotationMatrix::from_matrix_unchecked(*m))
}

pub fn rotation_from_rows(r: &[f64; 9]) -> Result<RotationMatrix> {
    validate_rotation(&Matrix3::from_row_slice(r))
}

/// Right-handed rotation by `angle` radians about `axis`.
pub fn axis_rotation(axis: &Vec3, angle: f64) -> RotationMatrix {
    RotationMatrix::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]) / norm;
            return nalgebra::UnitQuaternion::new_unchecked(quat).to_rotation_matrix();
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for RigidPose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr {
            r: self.rotation_row_major(),
            t: self.translation.into(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidPose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        RigidPose::from_row_major(&repr.r, &repr.t).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidPose {
        let t = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        RigidPose::new(random_rotation(rng), t)
    }

    #[test]
    fn identity_composition() {
        let id = RigidPose::identity();
        assert_eq!(id.compose(&id), id);
    }

    #[test]
    fn translations_add() {
        let a = RigidPose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let b = RigidPose::from_translation(Vec3::new(-0.5, 4.0, 1.0));
        let c = a.compose(&b);
        assert_eq!(c.translation, Vec3::new(0.5, 6.0, 4.0));
        assert_eq!(c.rotation, RotationMatrix::identity());
    }

    #[test]
    fn inverse_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_rotation(&mut rng);
        let c = RigidPose::from_rotation(r).compose(&RigidPose::from_rotation(r.inverse()));
        assert!((c.rotation.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(c.translation.norm() < 1e-12);
    }

    #[test]
    fn apply_identity_and_translation() {
        let cloud = PointCloud::new(vec![Vec3::new(1.0, -2.0, 0.5), Vec3::zeros()]);
        assert_eq!(RigidPose::identity().apply(&cloud), cloud);
        let moved = RigidPose::from_translation(Vec3::x()).apply(&PointCloud::new(vec![Vec3::zeros()]));
        assert_eq!(moved.points, vec![Vec3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = RigidPose::from_rotation(axis_rotation(&Vec3::z(), FRAC_PI_2));
        let q = p.transform_point(&Vec3::x());
        assert_relative_eq!(q, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn apply_preserves_attributes() {
        let mut cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::x()]);
        cloud.instance_ids = Some(vec![3, 4]);
        cloud.visibility = Some(vec![0.5, 1.0]);
        let out = RigidPose::from_translation(Vec3::y()).apply(&cloud);
        assert_eq!(out.instance_ids, cloud.instance_ids);
        assert_eq!(out.visibility, cloud.visibility);
    }

    #[test]
    fn composition_associative_and_consistent_with_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            assert!((left.rotation.matrix() - right.rotation.matrix()).abs().max() < 1e-9);
            assert!((left.translation - right.translation).abs().max() < 1e-9);

            let cloud = PointCloud::new((0..5).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
            let once = a.compose(&b).apply(&cloud);
            let twice = a.apply(&b.apply(&cloud));
            for (p, q) in once.points.iter().zip(&twice.points) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn random_rotations_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            validate_rotation(r.matrix()).unwrap();
        }
    }

    #[test]
    fn rejects_reflection_and_skew() {
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(validate_rotation(&reflect).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(validate_rotation(&skew).is_err());
    }

    #[test]
    fn json_layout_is_row_major() {
        let pose = RigidPose::new(axis_rotation(&Vec3::z(), FRAC_PI_2), Vec3::new(1.0, 2.0, 3.0));
        let json = serde_json::to_value(pose).unwrap();
        let r: Vec<f64> = serde_json::from_value(json["R"].clone()).unwrap();
        assert!((r[1] + 1.0).abs() < 1e-12, "R[0][1] should be -1, got {}", r[1]);
        let back: RigidPose = serde_json::from_value(json).unwrap();
        assert!((back.rotation.matrix() - pose.rotation.matrix()).abs().max() < 1e-15);
    }
}
