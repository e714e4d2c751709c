//! Symmetry-aware keypoint voting for 6D pose estimation in bin-picking
//! point clouds, with semi-chamfer pseudo-labelling for self-training.
//!
//! The pipeline stages are:
//!
//! 1. **Keypoints** – canonical frames, axis rules per symmetry class and
//!    equivalent keypoint sets under the object's rotation group.
//! 2. **Clustering** – DBSCAN, mean-distance cluster density, densest-cluster
//!    keypoint filtering and flat-kernel mean shift.
//! 3. **Pose** – visibility filtering, instance grouping, per-type voting and
//!    least-squares rigid fitting.
//! 4. **Adaptation** – semi-chamfer pose quality, dynamic thresholds, masked
//!    pseudo-labels and a teacher–student loop over abstract predictors.
//! 5. **Evaluation** – symmetry-aware pose distance, precision–recall and AP.
//!
//! [`simulation`] synthesizes desk-scale scenes and oracle predictions so the
//! whole chain can run without a trained network.

pub mod adaptation;
pub mod clustering;
pub mod config;
mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod keypoints;
pub mod pose;
pub mod simulation;

pub use error::{Error, Result};
pub use geometry::{PointCloud, RigidPose, Vec3};
