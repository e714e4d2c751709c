use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::adaptation::Predictor;
use crate::geometry::Vec3;
use crate::keypoints::KeypointSet;
use crate::pose::PredictionField;
use crate::{Error, Result};

/// Corruption applied by the oracle predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Isotropic keypoint noise, fraction of diameter.
    pub sigma: f64,
    /// Probability of targeting a random equivalent keypoint.
    pub p_amb: f64,
    /// Probability of a uniform-in-bin outlier.
    pub p_out: f64,
    /// Gaussian noise added to predicted visibility.
    pub visibility_noise: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            p_amb: 0.3,
            p_out: 0.05,
            visibility_noise: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn exact() -> Self {
        Self {
            sigma: 0.0,
            p_amb: 0.0,
            p_out: 0.0,
            visibility_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_amb", self.p_amb), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.sigma >= 0.0) || !(self.visibility_noise >= 0.0) {
            return Err(Error::InvalidParameter("noise scales must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Ground-truth keypoint predictions corrupted by `noise`.
pub fn oracle_predictor(
    scene: &Scene,
    keypoints: &KeypointSet,
    noise: &NoiseModel,
    diameter: f64,
    seed: u64,
) -> Result<PredictionField> {
    noise.validate()?;
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = Normal::new(0.0, noise.sigma * diameter).expect("sigma ≥ 0");
    let vis_noise = Normal::new(0.0, noise.visibility_noise).expect("noise ≥ 0");
    let (lo, ext) = (scene.bin.min, scene.bin.extent());
    let n_k = keypoints.len();
    let mut preds = Vec::with_capacity(scene.cloud.len() * n_k);
    let mut vis = Vec::with_capacity(scene.cloud.len());
    for &id in scene.instance_ids() {
        let pose = &scene.poses[id as usize];
        for j in 0..n_k {
            if noise.p_out > 0.0 && rng.random_bool(noise.p_out) {
                preds.push(lo + Vec3::new(rng.random::<f64>() * ext.x, rng.random::<f64>() * ext.y, rng.random::<f64>() * ext.z));
                continue;
            }
            let equivalents = &keypoints.equivalents[j];
            let target = if noise.p_amb > 0.0 && rng.random_bool(noise.p_amb) {
                equivalents[rng.random_range(0..equivalents.len())]
            } else {
                keypoints.keypoints[j]
            };
            let mut p = pose.transform_point(&target);
            if noise.sigma > 0.0 {
                p += Vec3::new(offset.sample(&mut rng), offset.sample(&mut rng), offset.sample(&mut rng));
            }
            preds.push(p);
        }
        let mut v = scene.visibility[id as usize];
        if noise.visibility_noise > 0.0 {
            v = (v + vis_noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        vis.push(v);
    }
    PredictionField::new(n_k, preds, vis)
}

/// [`oracle_predictor`] as a [`Predictor`]; the per-scene stream is seeded
/// from `seed` and the scene's own seed.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub keypoints: KeypointSet,
    pub noise: NoiseModel,
    pub diameter: f64,
    pub seed: u64,
}

impl Predictor for OraclePredictor {
    fn predict(&self, scene: &Scene) -> Result<PredictionField> {
        let seed = self.seed ^ scene.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        oracle_predictor(scene, &self.keypoints, &self.noise, self.diameter, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::dbscan;
    use crate::clustering::filter_keypoints;
    use crate::simulation::{synth_scene, zoo_object, SceneConfig};

    fn scene(name: &str, n: usize, seed: u64) -> (crate::keypoints::ObjectModel, KeypointSet, Scene) {
        let m = zoo_object(name).unwrap();
        let ks = KeypointSet::for_model(&m).unwrap();
        let cfg = SceneConfig {
            n_instances: n,
            ..SceneConfig::default()
        };
        let s = synth_scene(&m, &cfg, seed).unwrap();
        (m, ks, s)
    }

    #[test]
    fn exact_oracle_hits_keypoints() {
        let (m, ks, s) = scene("brick", 4, 1);
        let f = oracle_predictor(&s, &ks, &NoiseModel::exact(), m.diameter(), 0).unwrap();
        for (i, &id) in s.instance_ids().iter().enumerate() {
            for j in 0..ks.len() {
                assert_eq!(f.keypoint(i, j), s.poses[id as usize].transform_point(&ks.keypoints[j]));
            }
            assert_eq!(f.visibility()[i], s.visibility[id as usize]);
        }
    }

    #[test]
    fn reproducible() {
        let (m, ks, s) = scene("cylinder", 5, 2);
        let noise = NoiseModel {
            visibility_noise: 0.1,
            ..NoiseModel::default()
        };
        let a = oracle_predictor(&s, &ks, &noise, m.diameter(), 9).unwrap();
        let b = oracle_predictor(&s, &ks, &noise, m.diameter(), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.visibility().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn full_ambiguity_on_c6_gives_six_clusters() {
        let (m, ks, s) = scene("hex_prism", 1, 3);
        let noise = NoiseModel {
            sigma: 0.005,
            p_amb: 1.0,
            p_out: 0.0,
            visibility_noise: 0.0,
        };
        let f = oracle_predictor(&s, &ks, &noise, m.diameter(), 4).unwrap();
        let all: Vec<usize> = (0..f.len()).collect();
        let labels = dbscan(&f.type_predictions(&all, 2), 0.05 * m.diameter(), 5);
        assert_eq!(labels.count, 6);
    }

    #[test]
    fn pure_outliers_leave_no_cluster() {
        for seed in 0..20 {
            let (m, ks, s) = scene("tetrahedron", 1, seed);
            let noise = NoiseModel {
                p_out: 1.0,
                ..NoiseModel::exact()
            };
            let f = oracle_predictor(&s, &ks, &noise, m.diameter(), seed).unwrap();
            let all: Vec<usize> = (0..f.len()).collect();
            let preds = f.type_predictions(&all, 1);
            let min_pts = 3.max((0.05 * preds.len() as f64).ceil() as usize);
            assert!(matches!(
                filter_keypoints(&preds, 0.05 * m.diameter(), min_pts),
                Err(Error::NoKeypointCluster)
            ));
        }
    }

    #[test]
    fn gaussian_error_magnitude() {
        let (m, ks, s) = scene("brick", 10, 5);
        let noise = NoiseModel {
            sigma: 0.02,
            ..NoiseModel::exact()
        };
        let mut total = 0.0;
        let mut count = 0usize;
        let mut seed = 0;
        while count < 10_000 {
            let f = oracle_predictor(&s, &ks, &noise, m.diameter(), seed).unwrap();
            for (i, &id) in s.instance_ids().iter().enumerate() {
                let truth = s.poses[id as usize].transform_point(&ks.keypoints[0]);
                total += (f.keypoint(i, 0) - truth).norm();
                count += 1;
            }
            seed += 1;
        }
        let expected = 0.02 * m.diameter() * (8.0 / std::f64::consts::PI).sqrt();
        let mean = total / count as f64;
        assert!((mean - expected).abs() < 0.1 * expected, "{mean} vs {expected}");
    }
}
