//! Projective and rigid-motion primitives shared by every other module.
//!
//! Poses are world-to-camera: a world point `X` maps to camera coordinates
//! `R * X + t`. Angles leaving this module are in degrees.

mod align;
pub(crate) mod epipolar;
mod pose;
mod triangulate;

pub use align::{umeyama_align, umeyama_points, Similarity};
pub use epipolar::{fundamental_from_relpose, sampson_error, FundamentalMatrix};
pub use pose::{relative_pose, rotation_angle_deg, CameraIntrinsics, Pose, Trajectory};
pub use triangulate::{triangulate, triangulate_views, Triangulation};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// Relative translation is (numerically) zero, so no epipolar geometry exists.
    #[error("degenerate relative pose: translation norm below 1e-12")]
    Degenerate,
    #[error("sampson denominator below 1e-18")]
    DivisionDegenerate,
    #[error("need at least 3 corresponding positions, got {0}")]
    InsufficientPoints(usize),
    #[error("positions are collinear; rotation is not determined")]
    DegenerateGeometry,
    #[error("camera centers coincide; cannot triangulate")]
    ZeroBaseline,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Skew-symmetric cross-product matrix, `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
