use nalgebra::Matrix3;

use crate::geometry::{axis_rotation, RigidPose, RotationMatrix, SymmetryClass, Vec3};
use crate::keypoints::ObjectModel;

/// Outcome of a symmetry-aware pose comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDistanceResult {
    /// RMS point distance after the best symmetry, in scene units.
    pub distance: f64,
    /// Index into the declared finite group of the minimizing element.
    pub element: usize,
    /// For revolution objects, the minimizing angle about the axis.
    pub axis_angle: Option<f64>,
}

/// Pose distance for one model, with the representative subsample reduced to
/// its group-averaged first and second moments.
///
/// The mean squared distance between `p1∘g` and `p2` over a point set
/// depends only on the set's mean `μ` and second moment `S`:
/// `tr(A S Aᵀ) + 2uᵀAμ + ‖u‖²` with `A = R₁g − R₂`, `u = t₁ − t₂`.
/// Averaging the moments over the group makes the distance exactly
/// symmetric in its arguments; for revolution objects the axis angle is then
/// minimized in closed form instead of over a fixed step grid.
#[derive(Debug, Clone)]
pub struct PoseMetric {
    group: Vec<RotationMatrix>,
    axis: Option<Vec3>,
    mean: Vec3,
    moment: Matrix3<f64>,
}

impl PoseMetric {
    pub fn new(model: &ObjectModel) -> Self {
        let pts = model.eval_points();
        let n = pts.len() as f64;
        let mean0 = pts.iter().sum::<Vec3>() / n;
        let moment0 = pts.iter().map(|p| p * p.transpose()).sum::<Matrix3<f64>>() / n;
        let sym = model.symmetry();
        let group = sym.group().to_vec();
        let k = group.len() as f64;
        let mut mean = group.iter().map(|g| g * mean0).sum::<Vec3>() / k;
        let mut moment = group
            .iter()
            .map(|g| g.matrix() * moment0 * g.matrix().transpose())
            .sum::<Matrix3<f64>>()
            / k;
        let axis = match sym.class {
            SymmetryClass::Revolution => sym.rotation_axis,
            _ => None,
        };
        if let Some(a) = axis {
            let along = a.dot(&mean);
            mean = a * along;
            let aa = a * a.transpose();
            let s_aa = (a.transpose() * moment * a)[0];
            let perp = Matrix3::identity() - aa;
            moment = aa * s_aa + perp * ((moment.trace() - s_aa) / 2.0);
        }
        Self {
            group,
            axis,
            mean,
            moment,
        }
    }

    fn mean_square(&self, a: &Matrix3<f64>, u: &Vec3) -> f64 {
        let quad = (a * self.moment * a.transpose()).trace();
        (quad + 2.0 * u.dot(&(a * self.mean)) + u.norm_squared()).max(0.0)
    }

    /// Minimum over symmetries `g` of the RMS distance between `p1∘g` and `p2`.
    pub fn distance(&self, p1: &RigidPose, p2: &RigidPose) -> PoseDistanceResult {
        let r1 = p1.rotation.matrix();
        let r2 = p2.rotation.matrix();
        let u = p1.translation - p2.translation;
        let mut best = PoseDistanceResult {
            distance: f64::INFINITY,
            element: 0,
            axis_angle: None,
        };
        for (idx, f) in self.group.iter().enumerate() {
            let (g, angle) = match self.axis {
                Some(a) => {
                    // maximize tr(Rot_a(θ)·N), N = f·S·R₂ᵀ·R₁
                    let n = f.matrix() * self.moment * r2.transpose() * r1;
                    let ana = (a.transpose() * n * a)[0];
                    let cross = a.cross_matrix();
                    let sin_coef = (cross * n).trace();
                    let cos_coef = n.trace() - ana;
                    let theta = sin_coef.atan2(cos_coef);
                    (axis_rotation(&a, theta) * f, Some(theta))
                }
                None => (*f, None),
            };
            let a_mat = r1 * g.matrix() - r2;
            let d = self.mean_square(&a_mat, &u).sqrt();
            if d < best.distance {
                best = PoseDistanceResult {
                    distance: d,
                    element: idx,
                    axis_angle: angle,
                };
            }
        }
        best
    }
}

/// Symmetry-aware RMS pose distance over the model's representative subsample.
pub fn pose_distance(p1: &RigidPose, p2: &RigidPose, model: &ObjectModel) -> PoseDistanceResult {
    PoseMetric::new(model).distance(p1, p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;
    use crate::simulation::{zoo_object, ZOO_NAMES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidPose {
        RigidPose::new(random_rotation(rng), Vec3::new(rng.random(), rng.random(), rng.random()) * 3.0)
    }

    /// Direct RMS over explicit symmetrized points (finite groups).
    fn brute_force(p1: &RigidPose, p2: &RigidPose, model: &ObjectModel) -> f64 {
        let g_all = model.symmetry().group();
        let orbit: Vec<Vec3> = model
            .eval_points()
            .iter()
            .flat_map(|x| g_all.iter().map(move |h| h * x))
            .collect();
        g_all
            .iter()
            .map(|g| {
                let pg = p1.compose(&RigidPose::from_rotation(*g));
                let ms = orbit
                    .iter()
                    .map(|x| (pg.transform_point(x) - p2.transform_point(x)).norm_squared())
                    .sum::<f64>()
                    / orbit.len() as f64;
                ms.sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn zero_for_equal_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in ZOO_NAMES {
            let m = zoo_object(name).unwrap();
            let p = random_pose(&mut rng);
            assert!(pose_distance(&p, &p, &m).distance < 1e-9, "{name}");
        }
    }

    #[test]
    fn translation_offset_is_exact() {
        let m = zoo_object("tetrahedron").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let off = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
            let q = RigidPose::new(p.rotation, p.translation + off);
            assert!((pose_distance(&p, &q, &m).distance - off.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn asymmetric_matches_plain_rms() {
        let m = zoo_object("l_bracket").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (p, q) = (random_pose(&mut rng), random_pose(&mut rng));
            let direct = (m
                .eval_points()
                .iter()
                .map(|x| (p.transform_point(x) - q.transform_point(x)).norm_squared())
                .sum::<f64>()
                / m.eval_points().len() as f64)
                .sqrt();
            assert!((pose_distance(&p, &q, &m).distance - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn finite_groups_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for name in ["hex_prism", "brick"] {
            let m = zoo_object(name).unwrap();
            for _ in 0..20 {
                let (p, q) = (random_pose(&mut rng), random_pose(&mut rng));
                let d = pose_distance(&p, &q, &m).distance;
                assert!((d - brute_force(&p, &q, &m)).abs() < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in ZOO_NAMES {
            let m = zoo_object(name).unwrap();
            let metric = PoseMetric::new(&m);
            for _ in 0..20 {
                let (p, q) = (random_pose(&mut rng), random_pose(&mut rng));
                let a = metric.distance(&p, &q).distance;
                let b = metric.distance(&q, &p).distance;
                assert!((a - b).abs() < 1e-9, "{name}: {a} {b}");
            }
        }
    }

    #[test]
    fn quotient_by_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for name in ZOO_NAMES {
            let m = zoo_object(name).unwrap();
            let metric = PoseMetric::new(&m);
            for g in m.symmetry().elements() {
                let p = random_pose(&mut rng);
                let q = p.compose(&RigidPose::from_rotation(g));
                assert!(metric.distance(&p, &q).distance < 1e-6, "{name}");
            }
        }
    }

    #[test]
    fn revolution_quotient_is_continuous() {
        let m = zoo_object("cylinder").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let q = p.compose(&RigidPose::from_rotation(axis_rotation(&Vec3::z(), theta)));
            assert!(pose_distance(&p, &q, &m).distance < 1e-9);
        }
    }

    #[test]
    fn never_exceeds_identity_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for name in ZOO_NAMES {
            let metric = PoseMetric::new(&zoo_object(name).unwrap());
            for _ in 0..10 {
                let (p, q) = (random_pose(&mut rng), random_pose(&mut rng));
                assert!(metric.distance(&p, &q).distance <= identity_term(&metric, &p, &q) + 1e-12);
            }
        }
    }

    fn identity_term(metric: &PoseMetric, p: &RigidPose, q: &RigidPose) -> f64 {
        let a = p.rotation.matrix() - q.rotation.matrix();
        metric.mean_square(&a, &(p.translation - q.translation)).sqrt()
    }
}
