//! Least-squares rigid fit between voted and canonical keypoints.

use nalgebra::Matrix3;

use crate::geometry::{axis_rotation, centroid, RigidPose, RotationMatrix, Vec3};
use crate::{Error, Result};

/// Relative singular-value threshold below which the cross-covariance is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Sum of squared residuals `Σ ‖voted_j − (R·canonical_j + t)‖²`.
pub fn fit_residual(pose: &RigidPose, voted: &[Vec3], canonical: &[Vec3]) -> f64 {
    voted
        .iter()
        .zip(canonical)
        .map(|(v, k)| (v - pose.transform_point(k)).norm_squared())
        .sum()
}

/// Minimal-angle rotation taking unit `from` onto unit `to`.
fn minimal_rotation(from: &Vec3, to: &Vec3) -> RotationMatrix {
    if (from - to).norm() <= 1e-15 {
        return RotationMatrix::identity();
    }
    RotationMatrix::rotation_between(from, to).unwrap_or_else(|| {
        // antiparallel: half-turn about the perpendicular closest to a coordinate axis
        let k = (0..3)
            .min_by(|&a, &b| from[a].abs().total_cmp(&from[b].abs()))
            .expect("three axes");
        let perp = from.cross(&Vec3::ith(k, 1.0)).normalize();
        axis_rotation(&perp, std::f64::consts::PI)
    })
}

/// Rigid pose minimizing the squared keypoint residual (centered
/// cross-covariance + SVD, reflection corrected).
///
/// When all keypoints are collinear the rotation about their common line is
/// unconstrained; the minimal-angle rotation aligning the lines is returned.
pub fn fit_pose(voted: &[Vec3], canonical: &[Vec3]) -> Result<RigidPose> {
    if voted.len() != canonical.len() {
        return Err(Error::LengthMismatch {
            what: "voted keypoints",
            got: voted.len(),
            expected: canonical.len(),
        });
    }
    if voted.len() < 2 {
        return Err(Error::Underdetermined(voted.len()));
    }
    let cv = centroid(voted).expect("nonempty");
    let ck = centroid(canonical).expect("nonempty");
    let mut h = Matrix3::zeros();
    for (v, k) in voted.iter().zip(canonical) {
        h += (v - cv) * (k - ck).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = svd.singular_values;
    let (s1, s2) = (s[order[0]], s[order[1]]);

    let rotation = if s1 <= f64::MIN_POSITIVE {
        RotationMatrix::identity()
    } else if s2 <= RANK_TOL * s1 {
        let dst: Vec3 = u.column(order[0]).into();
        let src: Vec3 = v_t.row(order[0]).transpose();
        minimal_rotation(&src.normalize(), &dst.normalize())
    } else {
        let d = (u * v_t).determinant().signum();
        let mut correction = Matrix3::identity();
        correction[(order[2], order[2])] = d;
        let r = u * correction * v_t;
        // re-orthonormalize away accumulated rounding
        RotationMatrix::from_matrix_eps(&r, 1e-15, 50, RotationMatrix::identity())
    };
    let translation = cv - rotation * ck;
    Ok(RigidPose::new(rotation, translation))
}
