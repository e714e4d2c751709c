use serde::{Deserialize, Serialize};

use super::PoseMetric;
use crate::geometry::RigidPose;
use crate::keypoints::ObjectModel;

/// Matching outcome of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched an ineligible (heavily occluded) truth; excluded from PR.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMatch {
    /// Position of the estimate in the input list.
    pub estimate: usize,
    pub confidence: f64,
    pub outcome: MatchOutcome,
    /// Matched truth index, if any.
    pub truth: Option<usize>,
    /// Distance to the nearest truth considered.
    pub distance: f64,
}

/// Per-scene matching result, in confidence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMatch {
    pub matches: Vec<EstimateMatch>,
    /// Number of eligible truths.
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each counted estimate.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// Greedy one-to-one matching in descending confidence (ties: lower index).
///
/// An estimate is a true positive when its nearest unmatched eligible truth
/// lies within `threshold`; otherwise it is ignored when some ineligible
/// truth lies within `threshold`, and a false positive if not.
pub fn match_scene(
    estimates: &[(RigidPose, f64)],
    truths: &[RigidPose],
    truth_visibility: &[f64],
    metric: &PoseMetric,
    threshold: f64,
    min_visibility: f64,
) -> SceneMatch {
    let eligible: Vec<bool> = truth_visibility.iter().map(|&v| v >= min_visibility).collect();
    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&a, &b| estimates[b].1.total_cmp(&estimates[a].1).then(a.cmp(&b)));
    let mut taken = vec![false; truths.len()];
    let mut matches = Vec::with_capacity(estimates.len());
    for e in order {
        let (pose, confidence) = &estimates[e];
        let dists: Vec<f64> = truths.iter().map(|t| metric.distance(pose, t).distance).collect();
        let nearest_eligible = (0..truths.len())
            .filter(|&t| eligible[t] && !taken[t])
            .min_by(|&a, &b| dists[a].total_cmp(&dists[b]));
        let nearest_ineligible = (0..truths.len())
            .filter(|&t| !eligible[t])
            .min_by(|&a, &b| dists[a].total_cmp(&dists[b]));
        let (outcome, truth, distance) = match (nearest_eligible, nearest_ineligible) {
            (Some(t), _) if dists[t] < threshold => {
                taken[t] = true;
                (MatchOutcome::TruePositive, Some(t), dists[t])
            }
            (_, Some(t)) if dists[t] < threshold => (MatchOutcome::Ignored, Some(t), dists[t]),
            (Some(t), _) => (MatchOutcome::FalsePositive, None, dists[t]),
            _ => (MatchOutcome::FalsePositive, None, f64::INFINITY),
        };
        matches.push(EstimateMatch {
            estimate: e,
            confidence: *confidence,
            outcome,
            truth,
            distance,
        });
    }
    SceneMatch {
        matches,
        positives: eligible.iter().filter(|&&e| e).count(),
    }
}

/// Pools scene matches, ranks by confidence (ties: scene order, then
/// in-scene order) and integrates the precision envelope over recall.
pub fn pr_curve(scenes: &[SceneMatch]) -> PrCurve {
    let positives: usize = scenes.iter().map(|s| s.positives).sum();
    let mut pooled: Vec<(f64, bool)> = scenes
        .iter()
        .flat_map(|s| s.matches.iter())
        .filter(|m| m.outcome != MatchOutcome::Ignored)
        .map(|m| (m.confidence, m.outcome == MatchOutcome::TruePositive))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    if positives == 0 {
        return PrCurve {
            points: Vec::new(),
            ap: 0.0,
        };
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(pooled.len());
    for (k, (_, hit)) in pooled.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / (k + 1) as f64));
    }
    PrCurve {
        ap: step_area(&points),
        points,
    }
}

/// Area under the precision envelope `p(r) = max{precision at recall ≥ r}`.
fn step_area(points: &[(f64, f64)]) -> f64 {
    let mut envelope = vec![0.0; points.len()];
    let mut running: f64 = 0.0;
    for k in (0..points.len()).rev() {
        running = running.max(points[k].1);
        envelope[k] = running;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(r, _)) in points.iter().enumerate() {
        area += (r - prev_recall) * envelope[k];
        prev_recall = r;
    }
    area
}

/// Matches one scene with a `threshold_frac · diameter` threshold and
/// returns its PR curve.
pub fn match_and_pr(
    estimates: &[(RigidPose, f64)],
    truths: &[RigidPose],
    truth_visibility: &[f64],
    model: &ObjectModel,
    threshold_frac: f64,
    min_visibility: f64,
) -> PrCurve {
    let metric = PoseMetric::new(model);
    let m = match_scene(
        estimates,
        truths,
        truth_visibility,
        &metric,
        threshold_frac * model.diameter(),
        min_visibility,
    );
    pr_curve(&[m])
}
