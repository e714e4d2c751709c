use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::{Error, Result};

/// Strength of the synthetic-to-target domain gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftParams {
    /// Fraction of points dropped uniformly.
    pub dropout: f64,
    /// Std of additive depth (z) noise, fraction of diameter.
    pub depth_noise: f64,
    /// Extra drop probability growing linearly along +x of the bin (0 at
    /// min x, `density_gradient` at max x).
    pub density_gradient: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            dropout: 0.3,
            depth_noise: 0.005,
            density_gradient: 0.4,
        }
    }
}

impl ShiftParams {
    pub fn none() -> Self {
        Self {
            dropout: 0.0,
            depth_noise: 0.0,
            density_gradient: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.density_gradient) {
            return Err(Error::InvalidParameter("dropout and density_gradient must lie in [0, 1]".into()));
        }
        if !(self.depth_noise >= 0.0) {
            return Err(Error::InvalidParameter("depth_noise must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Drops, jitters and nonuniformly thins a scene. Poses are kept; visibility
/// is recomputed from the surviving counts.
pub fn domain_shift(scene: &Scene, params: &ShiftParams, diameter: f64, seed: u64) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.depth_noise * diameter).expect("depth_noise ≥ 0");
    let (x0, wx) = (scene.bin.min.x, scene.bin.extent().x);
    let mut points = Vec::with_capacity(scene.cloud.len());
    let mut ids = Vec::with_capacity(scene.cloud.len());
    for (p, &id) in scene.cloud.points.iter().zip(scene.instance_ids()) {
        let u = ((p.x - x0) / wx).clamp(0.0, 1.0);
        let keep = (1.0 - params.dropout) * (1.0 - params.density_gradient * u);
        if keep < 1.0 && rng.random::<f64>() >= keep {
            continue;
        }
        let mut q = *p;
        if params.depth_noise > 0.0 {
            q.z += noise.sample(&mut rng);
        }
        points.push(q);
        ids.push(id);
    }
    Scene::from_labeled(points, ids, scene.poses.clone(), scene.bin, scene.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{synth_scene, zoo_object, SceneConfig};

    fn scene() -> (f64, Scene) {
        let m = zoo_object("hex_prism").unwrap();
        (m.diameter(), synth_scene(&m, &SceneConfig::default(), 8).unwrap())
    }

    #[test]
    fn zero_shift_is_identity() {
        let (d, s) = scene();
        assert_eq!(domain_shift(&s, &ShiftParams::none(), d, 1).unwrap(), s);
    }

    #[test]
    fn half_dropout_halves_points() {
        let (d, s) = scene();
        let n = s.cloud.len() as f64;
        let params = ShiftParams {
            dropout: 0.5,
            ..ShiftParams::none()
        };
        for seed in 0..10 {
            let shifted = domain_shift(&s, &params, d, seed).unwrap();
            let sd = (n * 0.25).sqrt();
            assert!((shifted.cloud.len() as f64 - n / 2.0).abs() < 3.0 * sd);
            assert_eq!(shifted.poses, s.poses);
            shifted.validate().unwrap();
        }
    }

    #[test]
    fn gradient_thins_high_x() {
        let (d, s) = scene();
        let params = ShiftParams {
            density_gradient: 0.8,
            ..ShiftParams::none()
        };
        let shifted = domain_shift(&s, &params, d, 2).unwrap();
        let mid = s.bin.center().x;
        let count = |sc: &Scene, right: bool| sc.cloud.points.iter().filter(|p| (p.x > mid) == right).count() as f64;
        let left_ratio = count(&shifted, false) / count(&s, false);
        let right_ratio = count(&shifted, true) / count(&s, true);
        assert!(right_ratio < left_ratio);
    }

    #[test]
    fn visibility_recomputed() {
        let (d, s) = scene();
        let shifted = domain_shift(&s, &ShiftParams::default(), d, 3).unwrap();
        let counts = shifted.counts();
        let max = *counts.iter().max().unwrap() as f64;
        for (v, c) in shifted.visibility.iter().zip(counts) {
            assert!((v * max - c as f64).abs() < 1e-9);
        }
    }
}
