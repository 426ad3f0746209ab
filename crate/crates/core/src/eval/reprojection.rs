use std::collections::BTreeMap;

use serde::Serialize;

use super::EvalError;
use crate::geometry::{fundamental_from_relpose, relative_pose, sampson_error, CameraIntrinsics, GeometryError, Point2, Pose, Trajectory};

/// Human correspondence between two frames of one video, in pixels of the
/// frame resized to a height of 720 (aspect preserved).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPair {
    pub video: String,
    pub frame_a: u32,
    pub frame_b: u32,
    pub point_a: Point2,
    pub point_b: Point2,
}

/// Annotated frames lie at most this many seconds apart.
const MAX_GAP_SECONDS: f64 = 2.5;

impl AnnotatedPair {
    /// Checks the frame gap against `fps` and both points against the
    /// 720p-resized frame of `k`.
    pub fn validate(&self, fps: f64, k: &CameraIntrinsics) -> Result<(), EvalError> {
        let gap = self.frame_a.abs_diff(self.frame_b) as f64;
        if gap > MAX_GAP_SECONDS * fps {
            return Err(EvalError::InvalidPair(format!(
                "frames {} and {} are more than {MAX_GAP_SECONDS} s apart at {fps} fps",
                self.frame_a, self.frame_b
            )));
        }
        let width = k.width as f64 * k.scale_to_720p();
        for p in [&self.point_a, &self.point_b] {
            if !(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= 720.0) {
                return Err(EvalError::InvalidPair(format!("point ({}, {}) outside the {width}x720 frame", p.x, p.y)));
            }
        }
        Ok(())
    }
}

/// Poses and native-resolution intrinsics of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPoses {
    pub trajectory: Trajectory,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampsonReport {
    /// Mean reprojection error per video, 720p pixels.
    pub per_video: BTreeMap<String, f64>,
    pub thresholds: Vec<f64>,
    /// Fraction of videos whose mean error is below each threshold.
    pub accuracy: Vec<f64>,
    /// Mean of the per-video errors.
    pub mean: f64,
}

/// Reprojection error of one correspondence: the square root of the Sampson
/// error under the fundamental matrix of the two poses. When the poses share
/// a camera center there is no epipolar geometry and the point distance is
/// used instead. `k` must already be at the resolution of the points.
pub fn pair_error(a: &Pose, b: &Pose, k: &CameraIntrinsics, pa: &Point2, pb: &Point2) -> Result<f64, EvalError> {
    match fundamental_from_relpose(k, k, &relative_pose(a, b)) {
        Ok(f) => match sampson_error(&f, pa, pb) {
            Ok(e) => Ok(e.sqrt()),
            // both points sit on their epipoles, which satisfies the constraint
            Err(GeometryError::DivisionDegenerate) => Ok(0.0),
            Err(e) => Err(e.into()),
        },
        Err(GeometryError::Degenerate) => Ok((pb - pa).norm()),
        Err(e) => Err(e.into()),
    }
}

/// Per-video mean reprojection error of the annotated pairs and the share
/// of videos below each threshold. Trajectories must cover every annotated
/// frame (fill them first); every video needs at least one pair.
pub fn sampson_eval(
    videos: &BTreeMap<String, VideoPoses>,
    pairs: &[AnnotatedPair],
    thresholds: &[f64],
) -> Result<SampsonReport, EvalError> {
    let mut sums: BTreeMap<&str, (f64, usize)> = videos.keys().map(|v| (v.as_str(), (0.0, 0))).collect();
    for pair in pairs {
        let v = videos.get(&pair.video).ok_or_else(|| EvalError::UnknownVideo(pair.video.clone()))?;
        let pose = |frame: u32| {
            v.trajectory.pose(frame).ok_or_else(|| EvalError::MissingPose { video: pair.video.clone(), frame })
        };
        let k = v.intrinsics.scaled(v.intrinsics.scale_to_720p());
        let e = pair_error(pose(pair.frame_a)?, pose(pair.frame_b)?, &k, &pair.point_a, &pair.point_b)?;
        let slot = sums.get_mut(pair.video.as_str()).expect("video was found above");
        slot.0 += e;
        slot.1 += 1;
    }
    let mut per_video = BTreeMap::new();
    for (v, (sum, n)) in sums {
        if n == 0 {
            return Err(EvalError::NoPairs(v.to_string()));
        }
        per_video.insert(v.to_string(), sum / n as f64);
    }
    let count = per_video.len().max(1) as f64;
    let accuracy = thresholds.iter().map(|t| per_video.values().filter(|&&e| e < *t).count() as f64 / count).collect();
    let mean = per_video.values().sum::<f64>() / count;
    Ok(SampsonReport { per_video, thresholds: thresholds.to_vec(), accuracy, mean })
}

/// Replaces the human points with the refined match lying within `radius`
/// px of both of them, preferring the smallest summed distance (earlier
/// candidate on ties). `None` when no candidate qualifies.
pub fn correspondence_gate(human: &AnnotatedPair, candidates: &[(Point2, Point2)], radius: f64) -> Option<AnnotatedPair> {
    let mut best: Option<(f64, &(Point2, Point2))> = None;
    for c in candidates {
        let (da, db) = ((c.0 - human.point_a).norm(), (c.1 - human.point_b).norm());
        if da <= radius && db <= radius && best.is_none_or(|(d, _)| da + db < d) {
            best = Some((da + db, c));
        }
    }
    best.map(|(_, (a, b))| AnnotatedPair { point_a: *a, point_b: *b, ..human.clone() })
}
