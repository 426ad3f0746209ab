//! Global structure from motion over mask-filtered correspondences.

mod bundle;
mod essential;
mod global_position;
mod landmarks;
mod pipeline;
mod position;
mod rotation;
mod view_graph;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::tracking::TrackError;

pub use bundle::{bundle_adjust, reprojection_jacobian, reprojection_residual, BundleConfig, BundleReport, ReprojectionJacobian};
pub use essential::{decompose_essential, estimate_relative_pose, project_to_essential, EssentialConfig, RelativeEstimate};
pub use global_position::track_positioning;
pub use landmarks::{triangulate_landmarks, Landmark, LandmarkConfig};
pub use pipeline::{quality_filter, run_pipeline, SceneModel, SfmConfig, SfmFlag, SfmStatus};
pub use position::{position_averaging, PositionSolution};
pub use rotation::rotation_averaging;
pub use view_graph::{build_view_graph, ViewEdge, ViewGraph, ViewGraphConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfmError {
    #[error("no frame pair produced a view-graph edge")]
    EmptyGraph,
    #[error("direction constraints leave camera positions undetermined")]
    InsufficientParallax,
    #[error("bundle adjustment cost increased at every damping level")]
    Diverged,
    #[error("no landmark survived triangulation")]
    NoLandmarks,
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
