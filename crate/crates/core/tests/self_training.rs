use std::sync::{Arc, Mutex};

use binpose::adaptation::{
    dynamic_threshold, ground_truth_labels, make_pseudo_labels, score_scene, self_train, IdentityTrainer, Predictor,
    SelfTrainConfig, Trainer, TrainingScene,
};
use binpose::evaluation::PoseMetric;
use binpose::geometry::axis_rotation;
use binpose::keypoints::{KeypointSet, ObjectModel};
use binpose::pose::{InstanceDetection, PoseEstimate, PredictionField};
use binpose::simulation::{synth_scene, zoo_object, NoiseModel, OraclePredictor, Scene, SceneConfig};
use binpose::{RigidPose, Vec3};

/// Records what it was trained on and hands back the teacher.
#[derive(Default)]
struct Recorder {
    seen: Mutex<Vec<TrainingScene>>,
}

impl Trainer for Recorder {
    fn train(&self, teacher: &Arc<dyn Predictor>, data: &[TrainingScene]) -> binpose::Result<Arc<dyn Predictor>> {
        self.seen.lock().unwrap().extend_from_slice(data);
        Ok(Arc::clone(teacher))
    }
}

/// Predicts zero visibility everywhere, so nothing is ever detected.
struct Blind(usize);

impl Predictor for Blind {
    fn predict(&self, scene: &Scene) -> binpose::Result<PredictionField> {
        let n = scene.cloud.len();
        PredictionField::new(self.0, vec![Vec3::zeros(); n * self.0], vec![0.0; n])
    }
}

fn setup(name: &str, scenes: u64) -> (ObjectModel, KeypointSet, Vec<Scene>) {
    let model = zoo_object(name).unwrap();
    let ks = KeypointSet::for_model(&model).unwrap();
    let scenes = (0..scenes)
        .map(|s| synth_scene(&model, &SceneConfig::default(), 40 + s).unwrap())
        .collect();
    (model, ks, scenes)
}

fn exact_teacher(ks: &KeypointSet, model: &ObjectModel) -> Arc<dyn Predictor> {
    Arc::new(OraclePredictor {
        keypoints: ks.clone(),
        noise: NoiseModel::exact(),
        diameter: model.diameter(),
        seed: 0,
    })
}

#[test]
fn perfect_teacher_labels_match_ground_truth() {
    let (model, ks, scenes) = setup("brick", 2);
    let recorder = Recorder::default();
    let config = SelfTrainConfig {
        rounds: 1,
        ..SelfTrainConfig::default()
    };
    let out = self_train(exact_teacher(&ks, &model), &scenes, &recorder, &model, &ks, &config, None).unwrap();
    assert!(!out.halted);
    assert!(out.reports[0].accepted > 0);
    let seen = recorder.seen.lock().unwrap();
    let tol = 1e-6 * model.diameter();
    let mut checked = 0;
    for (scene, data) in scenes.iter().zip(seen.iter()) {
        let truth = ground_truth_labels(scene, &ks);
        for i in 0..scene.cloud.len() {
            let Some(labels) = data.labels.keypoint_labels(i) else { continue };
            let expected = truth.keypoint_labels(i).unwrap();
            for (got, want) in labels.iter().zip(expected) {
                // same equivalent set, possibly enumerated in another order
                for g in got {
                    let nearest = want.iter().map(|w| (w - g).norm()).fold(f64::INFINITY, f64::min);
                    assert!(nearest <= tol, "point {i}: label off by {nearest}");
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 1000, "only {checked} labeled points");
}

#[test]
fn identity_trainer_is_a_fixed_point() {
    let (model, ks, scenes) = setup("hex_prism", 2);
    let teacher = exact_teacher(&ks, &model);
    let out = self_train(
        Arc::clone(&teacher),
        &scenes,
        &IdentityTrainer,
        &model,
        &ks,
        &SelfTrainConfig::default(),
        None,
    )
    .unwrap();
    assert!(Arc::ptr_eq(&out.predictor, &teacher));
    assert_eq!(out.reports.len(), 2);
    for s in &scenes {
        assert_eq!(out.predictor.predict(s).unwrap(), teacher.predict(s).unwrap());
    }
}

#[test]
fn zero_acceptance_halts_with_teacher() {
    let (model, ks, scenes) = setup("brick", 1);
    let teacher: Arc<dyn Predictor> = Arc::new(Blind(ks.len()));
    let recorder = Recorder::default();
    let out = self_train(
        Arc::clone(&teacher),
        &scenes,
        &recorder,
        &model,
        &ks,
        &SelfTrainConfig::default(),
        None,
    )
    .unwrap();
    assert!(out.halted);
    assert_eq!(out.reports.len(), 1);
    assert_eq!(out.reports[0].accepted, 0);
    assert!(Arc::ptr_eq(&out.predictor, &teacher));
    assert!(recorder.seen.lock().unwrap().is_empty());
}

#[test]
fn zero_rounds_rejected() {
    let (model, ks, scenes) = setup("brick", 1);
    let config = SelfTrainConfig {
        rounds: 0,
        ..SelfTrainConfig::default()
    };
    assert!(self_train(exact_teacher(&ks, &model), &scenes, &IdentityTrainer, &model, &ks, &config, None).is_err());
}

fn estimate(scene: &Scene, k: usize, pose: RigidPose) -> PoseEstimate {
    PoseEstimate {
        pose,
        confidence: 1.0,
        instance: InstanceDetection {
            members: scene.members(k),
            voted: Vec::new(),
            confidence: 1.0,
        },
    }
}

/// Rotates by `angle` about a fixed oblique axis and shifts by `shift`.
fn corrupt(p: &RigidPose, angle: f64, shift: f64) -> RigidPose {
    let r = axis_rotation(&Vec3::new(1.0, 2.0, 0.5), angle);
    RigidPose::new(p.rotation * r, p.translation + Vec3::new(shift, -shift, 0.5 * shift))
}

#[test]
fn mixed_scene_mask_is_mostly_accurate() {
    let (model, ks, scenes) = setup("l_bracket", 5);
    let metric = PoseMetric::new(&model);
    let d = model.diameter();
    let (mut good_total, mut mask_total) = (0, 0);
    for scene in &scenes {
        let mut accurate = Vec::new();
        let estimates: Vec<PoseEstimate> = (0..scene.num_instances())
            .filter(|&k| !scene.members(k).is_empty())
            .map(|k| {
                let good = accurate.len() % 2 == 0;
                let pose = if good {
                    corrupt(&scene.poses[k], 0.01, 0.005 * d)
                } else {
                    corrupt(&scene.poses[k], 1.2, 0.25 * d)
                };
                let err = metric.distance(&pose, &scene.poses[k]).distance;
                // ground-truth oracle classification of the injected pose
                assert!(if good { err < 0.05 * d } else { err > 0.3 * d }, "err {err}");
                accurate.push(good);
                estimate(scene, k, pose)
            })
            .collect();
        let scores = score_scene(&scene.cloud, &estimates, &model, false).unwrap();
        let d_g = dynamic_threshold(&scores.iter().map(|s| s.d).collect::<Vec<_>>(), 0.0).unwrap();
        let labels = make_pseudo_labels(scene.cloud.len(), &estimates, &scores, d_g, &ks);
        let from_accurate: usize = labels
            .instances
            .iter()
            .zip(&accurate)
            .filter(|(inst, &good)| inst.accepted && good)
            .map(|(inst, _)| inst.members.len())
            .sum();
        let mask = labels.mask_count();
        let accepted_members: usize = labels.instances.iter().filter(|i| i.accepted).map(|i| i.members.len()).sum();
        assert_eq!(mask, accepted_members);
        assert!(mask > 0);
        good_total += from_accurate;
        mask_total += mask;
    }
    // a wrong pose can still explain a partial view, so precision is pooled over scenes
    assert!(good_total as f64 >= 0.9 * mask_total as f64, "{good_total}/{mask_total}");
}

#[test]
fn acceptance_is_scale_consistent() {
    let (model, ks, scenes) = setup("brick", 1);
    let scene = &scenes[0];
    let estimates: Vec<PoseEstimate> = (0..scene.num_instances())
        .filter(|&k| !scene.members(k).is_empty())
        .map(|k| estimate(scene, k, corrupt(&scene.poses[k], 0.05 * k as f64, 0.01 * k as f64)))
        .collect();
    let s = 3.7;
    let big_model = ObjectModel::new(
        "big",
        model.points().iter().map(|p| p * s).collect(),
        model.symmetry().clone(),
        model.axis_seed(),
        model.eval_seed(),
    )
    .unwrap();
    let mut big_cloud = scene.cloud.clone();
    big_cloud.points.iter_mut().for_each(|p| *p *= s);
    let big_estimates: Vec<PoseEstimate> = estimates
        .iter()
        .map(|e| PoseEstimate {
            pose: RigidPose::new(e.pose.rotation, e.pose.translation * s),
            ..e.clone()
        })
        .collect();
    let small = score_scene(&scene.cloud, &estimates, &model, false).unwrap();
    let large = score_scene(&big_cloud, &big_estimates, &big_model, false).unwrap();
    for (a, b) in small.iter().zip(&large) {
        assert!((b.d - s * a.d).abs() <= 1e-9 * s * (1.0 + a.d), "{} vs {}", b.d, s * a.d);
    }
    let ds = |v: &[binpose::adaptation::QualityScore]| v.iter().map(|q| q.d).collect::<Vec<_>>();
    let (g1, g2) = (dynamic_threshold(&ds(&small), 0.5).unwrap(), dynamic_threshold(&ds(&large), 0.5).unwrap());
    assert!((g2 - s * g1).abs() <= 1e-9 * s);
    let l1 = make_pseudo_labels(scene.cloud.len(), &estimates, &small, g1, &ks);
    let l2 = make_pseudo_labels(scene.cloud.len(), &big_estimates, &large, g2, &ks);
    let decisions = |l: &binpose::adaptation::PseudoLabelSet| l.instances.iter().map(|i| i.accepted).collect::<Vec<_>>();
    assert_eq!(decisions(&l1), decisions(&l2));
}
