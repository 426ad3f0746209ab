//! Trajectory and reprojection metrics for comparing reconstructions.

mod reprojection;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

pub use reprojection::{correspondence_gate, pair_error, sampson_eval, AnnotatedPair, SampsonReport, VideoPoses};
pub use trajectory::{ate, fill_trajectory, random_fill, rpe, trajectory_report, Rpe, TrajectoryReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("video {0} has no annotated pairs")]
    NoPairs(String),
    #[error("annotated pair refers to unknown video {0}")]
    UnknownVideo(String),
    #[error("frame {frame} has no pose in video {video}")]
    MissingPose { video: String, frame: u32 },
    #[error("trajectories must be complete over the same frames: {0}")]
    Mismatch(String),
    #[error("invalid annotated pair: {0}")]
    InvalidPair(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Evaluation settings shared by the trajectory and reprojection metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// A video counts as accurate at threshold `t` when its mean error is below `t` px.
    pub thresholds_px: Vec<f64>,
    /// Reuse the ATE similarity before computing RPE.
    pub align_rpe: bool,
    /// Refined matches must lie this close to both human points (720p pixels).
    pub gate_radius_px: f64,
    /// Seed for the random trajectory that replaces a failed reconstruction.
    pub random_fill_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds_px: vec![5.0, 10.0, 30.0], align_rpe: true, gate_radius_px: 10.0, random_fill_seed: 0 }
    }
}
