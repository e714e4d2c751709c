use serde::{Deserialize, Serialize};

use crate::geometry::{NeighborIndex, PointCloud, Vec3};
use crate::keypoints::ObjectModel;
use crate::pose::PoseEstimate;
use crate::{Error, Result};

/// Mean distance from each observed point to its nearest backprojected point.
/// Only the observed → backprojected direction is evaluated.
pub fn semi_chamfer(observed: &[Vec3], backprojected: &[Vec3]) -> Result<f64> {
    if observed.is_empty() || backprojected.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NeighborIndex::new(backprojected);
    semi_chamfer_indexed(observed, &index)
}

fn semi_chamfer_indexed(observed: &[Vec3], index: &NeighborIndex) -> Result<f64> {
    let mut total = 0.0;
    for p in observed {
        total += index.nearest(p)?.1;
    }
    Ok(total / observed.len() as f64)
}

/// Average of both semi-chamfer directions.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(0.5 * (semi_chamfer(a, b)? + semi_chamfer(b, a)?))
}

/// Geometric quality `d_i` of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// Position of the estimate in the scored list.
    pub estimate: usize,
    pub d: f64,
}

/// Scores every estimate by the semi-chamfer distance from its member points
/// to the model placed at the estimated pose (or the two-sided chamfer when
/// `bidirectional`). Estimates without members are skipped.
pub fn score_scene(
    cloud: &PointCloud,
    estimates: &[PoseEstimate],
    model: &ObjectModel,
    bidirectional: bool,
) -> Result<Vec<QualityScore>> {
    let mut out = Vec::with_capacity(estimates.len());
    for (k, est) in estimates.iter().enumerate() {
        if est.instance.members.is_empty() {
            log::warn!("estimate {k} has no member points; not scored");
            continue;
        }
        // pull observations into the model frame and reuse the model's index
        let inv = est.pose.inverse();
        let observed: Vec<Vec3> = est
            .instance
            .members
            .iter()
            .map(|&i| inv.transform_point(&cloud.points[i]))
            .collect();
        let mut d = semi_chamfer_indexed(&observed, model.index())?;
        if bidirectional {
            d = 0.5 * (d + semi_chamfer(model.points(), &observed)?);
        }
        out.push(QualityScore { estimate: k, d });
    }
    Ok(out)
}

/// `mean + kappa · std` (population std) of the scores.
pub fn dynamic_threshold(scores: &[f64], kappa: f64) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::InsufficientScores(scores.len()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(mean + kappa * var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, RigidPose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(p: &[Vec3], c: &[Vec3]) -> f64 {
        p.iter()
            .map(|x| c.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / p.len() as f64
    }

    #[test]
    fn subset_is_zero() {
        let c: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, (i * i) as f64, 1.0)).collect();
        assert_eq!(semi_chamfer(&c[3..9], &c).unwrap(), 0.0);
    }

    #[test]
    fn nearest_of_two() {
        let d = semi_chamfer(&[Vec3::zeros()], &[Vec3::new(3.0, 4.0, 0.0), Vec3::new(10.0, 0.0, 0.0)]).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn direction_matters() {
        let p = vec![Vec3::zeros()];
        let c = vec![Vec3::zeros(), Vec3::new(4.0, 0.0, 0.0)];
        assert_eq!(semi_chamfer(&p, &c).unwrap(), 0.0);
        assert_eq!(semi_chamfer(&c, &p).unwrap(), 2.0);
        assert_eq!(chamfer(&p, &c).unwrap(), 1.0);
    }

    #[test]
    fn empty_inputs() {
        assert!(semi_chamfer(&[], &[Vec3::zeros()]).is_err());
        assert!(semi_chamfer(&[Vec3::zeros()], &[]).is_err());
    }

    #[test]
    fn matches_brute_force_and_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let p: Vec<Vec3> = (0..40).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
            let c: Vec<Vec3> = (0..70).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
            let d = semi_chamfer(&p, &c).unwrap();
            assert!((d - brute(&p, &c)).abs() < 1e-12);
            let t = RigidPose::new(random_rotation(&mut rng), Vec3::new(5.0, -2.0, 1.0));
            let d2 = semi_chamfer(&t.transform_points(&p), &t.transform_points(&c)).unwrap();
            assert!((d - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(dynamic_threshold(&[1.0; 4], 3.0).unwrap(), 1.0);
        assert_eq!(dynamic_threshold(&[0.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(dynamic_threshold(&[0.0, 2.0], 1.0).unwrap(), 2.0);
        assert!(matches!(dynamic_threshold(&[1.0], 0.0), Err(Error::InsufficientScores(1))));
    }
}
