use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{triangulate_views, CameraIntrinsics, Point2, Point3, Trajectory};
use crate::masking::DynamicMask;
use crate::tracking::{static_observations, Tracklet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkConfig {
    pub max_reprojection_px: f64,
    pub min_angle_deg: f64,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        Self { max_reprojection_px: 4.0, min_angle_deg: 1.0 }
    }
}

/// One 3D point per tracklet with its unmasked observations in registered frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub tracklet: u64,
    pub point: Point3,
    pub observations: Vec<(u32, Point2)>,
}

/// Widest angle, in degrees, between viewing rays of `point`.
fn max_ray_angle(centers: &[crate::geometry::Vec3], point: &Point3) -> f64 {
    let rays: Vec<_> = centers.iter().map(|c| (point.coords - c).normalize()).collect();
    let mut best: f64 = 0.0;
    for (a, ra) in rays.iter().enumerate() {
        for rb in &rays[a + 1..] {
            best = best.max(ra.dot(rb).clamp(-1.0, 1.0).acos());
        }
    }
    best.to_degrees()
}

/// Triangulates every tracklet seen unmasked in at least two registered
/// frames. Points behind a camera, with any reprojection above the limit, or
/// with too narrow a ray angle are dropped.
pub fn triangulate_landmarks(
    tracklets: &[Tracklet],
    masks: &BTreeMap<u32, DynamicMask>,
    trajectory: &Trajectory,
    k: &CameraIntrinsics,
    config: &LandmarkConfig,
) -> Vec<Landmark> {
    tracklets
        .par_iter()
        .filter_map(|t| {
            let obs: Vec<(u32, Point2)> =
                static_observations(t, masks, u32::MAX).into_iter().filter(|(f, _)| trajectory.pose(*f).is_some()).collect();
            if obs.len() < 2 {
                return None;
            }
            let views: Vec<_> = obs.iter().map(|(f, p)| (*trajectory.pose(*f).unwrap(), *k, *p)).collect();
            let tri = triangulate_views(&views).ok()?;
            if !tri.in_front {
                return None;
            }
            let worst = views
                .iter()
                .map(|(pose, k, p)| pose.project(k, &tri.point).map_or(f64::INFINITY, |q| (q - p).norm()))
                .fold(0.0, f64::max);
            if worst > config.max_reprojection_px {
                return None;
            }
            let centers: Vec<_> = views.iter().map(|(pose, _, _)| pose.center()).collect();
            if max_ray_angle(&centers, &tri.point) <= config.min_angle_deg {
                return None;
            }
            Some(Landmark { tracklet: t.id, point: tri.point, observations: obs })
        })
        .collect()
}
