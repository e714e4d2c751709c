use crate::keypoints::KeypointSet;
use crate::pose::PredictionField;
use crate::simulation::Scene;
use crate::{Error, Result};

fn check_len(pred: &PredictionField, truth: &Scene) -> Result<()> {
    if pred.len() != truth.cloud.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            got: pred.len(),
            expected: truth.cloud.len(),
        });
    }
    Ok(())
}

/// Mean absolute visibility error over scene points.
pub fn visibility_loss(pred: &PredictionField, truth: &Scene) -> Result<f64> {
    check_len(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let truth_v = truth.point_visibility();
    let sum: f64 = pred.visibility().iter().zip(&truth_v).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Per-point sum over keypoint types of the distance to the nearest posed
/// equivalent keypoint, averaged over points. With `use_equivalents` off
/// only the canonical keypoint counts.
pub fn keypoint_loss(pred: &PredictionField, truth: &Scene, keypoints: &KeypointSet, use_equivalents: bool) -> Result<f64> {
    check_len(pred, truth)?;
    if pred.num_keypoints() != keypoints.len() {
        return Err(Error::LengthMismatch {
            what: "keypoint types",
            got: pred.num_keypoints(),
            expected: keypoints.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let posed: Vec<Vec<Vec<_>>> = truth
        .poses
        .iter()
        .map(|p| {
            (0..keypoints.len())
                .map(|j| {
                    if use_equivalents {
                        p.transform_points(&keypoints.equivalents[j])
                    } else {
                        vec![p.transform_point(&keypoints.keypoints[j])]
                    }
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for (i, &id) in truth.instance_ids().iter().enumerate() {
        for (j, targets) in posed[id as usize].iter().enumerate() {
            let k = pred.keypoint(i, j);
            total += targets.iter().map(|t| (k - t).norm()).fold(f64::INFINITY, f64::min);
        }
    }
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidPose, Vec3};
    use crate::simulation::{synth_scene, zoo_object, SceneConfig};

    fn setup(name: &str) -> (KeypointSet, Scene) {
        let m = zoo_object(name).unwrap();
        let ks = KeypointSet::for_model(&m).unwrap();
        let cfg = SceneConfig {
            n_instances: 3,
            ..SceneConfig::default()
        };
        (ks, synth_scene(&m, &cfg, 2).unwrap())
    }

    fn field(s: &Scene, ks: &KeypointSet, pick: impl Fn(&RigidPose, usize) -> Vec3, vis: impl Fn(usize) -> f64) -> PredictionField {
        let mut kp = Vec::new();
        let mut v = Vec::new();
        for (i, &id) in s.instance_ids().iter().enumerate() {
            for j in 0..ks.len() {
                kp.push(pick(&s.poses[id as usize], j));
            }
            v.push(vis(i));
        }
        PredictionField::new(ks.len(), kp, v).unwrap()
    }

    #[test]
    fn visibility_loss_cases() {
        let (ks, s) = setup("brick");
        let tv = s.point_visibility();
        let exact = field(&s, &ks, |p, j| p.transform_point(&ks.keypoints[j]), |i| tv[i]);
        assert_eq!(visibility_loss(&exact, &s).unwrap(), 0.0);
        let off = field(&s, &ks, |p, j| p.transform_point(&ks.keypoints[j]), |i| tv[i] - 0.1);
        assert!((visibility_loss(&off, &s).unwrap() - 0.1).abs() < 1e-12);
        let half = field(&s, &ks, |p, j| p.transform_point(&ks.keypoints[j]), |i| if i % 2 == 0 { tv[i] - 0.2 } else { tv[i] });
        let n = s.cloud.len() as f64;
        let expected = 0.2 * (n / 2.0).ceil() / n;
        assert!((visibility_loss(&half, &s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn equivalent_prediction_costs_nothing() {
        let (ks, s) = setup("hex_prism");
        let tv = s.point_visibility();
        let f = field(&s, &ks, |p, j| p.transform_point(ks.equivalents[j].last().unwrap()), |i| tv[i]);
        assert!(keypoint_loss(&f, &s, &ks, true).unwrap() < 1e-12);
        // without equivalents: chord between vertex 0 and the last equivalent
        let with_none = keypoint_loss(&f, &s, &ks, false).unwrap();
        let chord = (ks.keypoints[2] - ks.equivalents[2].last().unwrap()).norm();
        let r = ks.keypoints[2].xy().norm();
        let analytic = 2.0 * r * (std::f64::consts::PI / 6.0).sin();
        assert!((chord - analytic).abs() < 1e-9);
        assert!((with_none - chord).abs() < 1e-9);
    }

    #[test]
    fn offset_contributes_its_length() {
        let (ks, s) = setup("tetrahedron");
        let tv = s.point_visibility();
        let d = Vec3::new(0.01, -0.02, 0.005);
        let f = field(&s, &ks, |p, j| p.transform_point(&ks.keypoints[j]) + d, |i| tv[i]);
        let expected = d.norm() * ks.len() as f64;
        assert!((keypoint_loss(&f, &s, &ks, true).unwrap() - expected).abs() < 1e-12);
        assert_eq!(keypoint_loss(&f, &s, &ks, true).unwrap(), keypoint_loss(&f, &s, &ks, false).unwrap());
    }

    #[test]
    fn length_mismatch() {
        let (ks, s) = setup("brick");
        let f = PredictionField::empty(ks.len());
        assert!(visibility_loss(&f, &s).is_err());
        assert!(keypoint_loss(&f, &s, &ks, true).is_err());
    }
}
