//! Symmetry-aware pose distance, precision–recall, AP and loss metrics.

mod ap;
mod distance;
mod loss;

pub use ap::{match_and_pr, match_scene, pr_curve, EstimateMatch, MatchOutcome, PrCurve, SceneMatch};
pub use distance::{pose_distance, PoseDistanceResult, PoseMetric};
pub use loss::{keypoint_loss, visibility_loss};
