//! Foundational 3D types: points, rigid poses, clouds, boxes, symmetry
//! groups and a nearest-neighbor index.

mod cloud;
mod index;
mod pose;
mod sphere;
mod symmetry;

pub use cloud::{AxisAlignedBox, PointCloud};
pub use index::{KdTree, NeighborIndex};
pub use pose::{axis_rotation, random_rotation, rotation_from_rows, validate_rotation, RigidPose};
pub use sphere::{min_bounding_sphere, min_bounding_sphere_diameter, Sphere};
pub use symmetry::{SymmetryClass, SymmetrySpec, REVOLUTION_STEPS};

/// A point or direction in scene units.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Rotation matrix with orthonormality and unit determinant enforced at construction.
pub type RotationMatrix = nalgebra::Rotation3<f64>;

/// Tolerance used for orthonormality and determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// Arithmetic mean of a point set. Returns `None` for an empty slice.
pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}
