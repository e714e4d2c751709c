//! Self-training domain adaptation: semi-chamfer pose quality, dynamic
//! thresholding, masked pseudo-labels and the teacher–student loop.

mod chamfer;
mod knn;
mod labels;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chamfer::{chamfer, dynamic_threshold, score_scene, semi_chamfer, QualityScore};
pub use knn::{DescriptorParams, KnnPredictor, KnnTrainer};
pub use labels::{ground_truth_labels, make_pseudo_labels, LabeledInstance, PseudoLabelSet};

use crate::geometry::Vec3;
use crate::keypoints::{KeypointSet, ObjectModel};
use crate::pose::{estimate_scene, EstimateConfig, PredictionField};
use crate::simulation::Scene;
use crate::Result;

/// Produces per-point keypoint and visibility predictions for a scene.
/// Learned predictors must only read `scene.cloud.points`.
pub trait Predictor: Send + Sync {
    fn predict(&self, scene: &Scene) -> Result<PredictionField>;
}

/// Points of one scene with their (pseudo-)labels.
#[derive(Debug, Clone)]
pub struct TrainingScene {
    pub points: Vec<Vec3>,
    pub labels: PseudoLabelSet,
}

/// Builds a student predictor from labeled scenes. Masked points must not
/// influence the result.
pub trait Trainer: Send + Sync {
    fn train(&self, teacher: &Arc<dyn Predictor>, data: &[TrainingScene]) -> Result<Arc<dyn Predictor>>;
}

/// Returns the teacher unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTrainer;

impl Trainer for IdentityTrainer {
    fn train(&self, teacher: &Arc<dyn Predictor>, _data: &[TrainingScene]) -> Result<Arc<dyn Predictor>> {
        Ok(Arc::clone(teacher))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub rounds: usize,
    pub kappa: f64,
    pub estimate: EstimateConfig,
    /// Score with the two-sided chamfer instead of the semi-chamfer.
    pub bidirectional: bool,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            kappa: 0.0,
            estimate: EstimateConfig::default(),
            bidirectional: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub detected: usize,
    pub accepted: usize,
    pub mean_d: f64,
    pub threshold: f64,
    /// Validation AP of the student trained in this round.
    pub ap: Option<f64>,
}

pub struct SelfTrainOutcome {
    pub predictor: Arc<dyn Predictor>,
    pub reports: Vec<RoundReport>,
    /// Validation AP of the initial teacher.
    pub initial_ap: Option<f64>,
    /// Set when a round accepted nothing and the loop stopped early.
    pub halted: bool,
}

/// Scores, thresholds and pseudo-labels one batch of scenes with `teacher`.
pub fn pseudo_label_scenes(
    teacher: &dyn Predictor,
    scenes: &[Scene],
    model: &ObjectModel,
    keypoints: &KeypointSet,
    config: &SelfTrainConfig,
) -> Result<(Vec<PseudoLabelSet>, RoundReport)> {
    let scored: Vec<_> = scenes
        .par_iter()
        .map(|scene| {
            let field = teacher.predict(scene)?;
            let estimates = estimate_scene(&scene.cloud, &field, model, keypoints, &config.estimate)?;
            let scores = score_scene(&scene.cloud, &estimates, model, config.bidirectional)?;
            Ok((estimates, scores))
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = scored.iter().flat_map(|(_, s)| s.iter().map(|q| q.d)).collect();
    let detected = scored.iter().map(|(e, _)| e.len()).sum();
    let mean_d = if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 };
    let threshold = if all.len() >= 2 {
        dynamic_threshold(&all, config.kappa)?
    } else {
        // fewer than two scores: nothing can be accepted
        f64::NEG_INFINITY
    };
    let labels: Vec<PseudoLabelSet> = scenes
        .iter()
        .zip(&scored)
        .map(|(scene, (est, sc))| make_pseudo_labels(scene.cloud.len(), est, sc, threshold, keypoints))
        .collect();
    let accepted = labels.iter().map(PseudoLabelSet::accepted).sum();
    Ok((
        labels,
        RoundReport {
            round: 0,
            detected,
            accepted,
            mean_d,
            threshold,
            ap: None,
        },
    ))
}

/// Teacher–student iteration over unlabeled scenes for `config.rounds`
/// rounds. `validate` scores each student (e.g. AP on held-out scenes).
pub fn self_train(
    teacher: Arc<dyn Predictor>,
    scenes: &[Scene],
    trainer: &dyn Trainer,
    model: &ObjectModel,
    keypoints: &KeypointSet,
    config: &SelfTrainConfig,
    validate: Option<&(dyn Fn(&dyn Predictor) -> Result<f64> + Sync)>,
) -> Result<SelfTrainOutcome> {
    if config.rounds == 0 {
        return Err(crate::Error::InvalidParameter("rounds must be ≥ 1".into()));
    }
    let initial_ap = validate.map(|v| v(teacher.as_ref())).transpose()?;
    let mut current = teacher;
    let mut reports = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let (labels, mut report) = pseudo_label_scenes(current.as_ref(), scenes, model, keypoints, config)?;
        report.round = round;
        if report.accepted == 0 {
            log::warn!("round {round}: no instance accepted, stopping");
            reports.push(report);
            return Ok(SelfTrainOutcome {
                predictor: current,
                reports,
                initial_ap,
                halted: true,
            });
        }
        let data: Vec<TrainingScene> = scenes
            .iter()
            .zip(labels)
            .map(|(s, labels)| TrainingScene {
                points: s.cloud.points.clone(),
                labels,
            })
            .collect();
        let student = trainer.train(&current, &data)?;
        report.ap = validate.map(|v| v(student.as_ref())).transpose()?;
        log::info!(
            "round {round}: detected {} accepted {} mean_d {:.5} d_g {:.5} ap {:?}",
            report.detected,
            report.accepted,
            report.mean_d,
            report.threshold,
            report.ap
        );
        reports.push(report);
        current = student;
    }
    Ok(SelfTrainOutcome {
        predictor: current,
        reports,
        initial_ap,
        halted: false,
    })
}
