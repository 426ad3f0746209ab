use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::bundle::{bundle_adjust, BundleConfig};
use super::global_position::track_positioning;
use super::landmarks::{triangulate_landmarks, Landmark, LandmarkConfig};
use super::position::position_averaging;
use super::rotation::rotation_averaging;
use super::view_graph::{build_view_graph, ViewGraphConfig};
use super::SfmError;
use crate::geometry::{CameraIntrinsics, Pose, Trajectory};
use crate::masking::{pair_seed, DynamicMask};
use crate::tracking::{extract_correspondences, ExtractOptions, Tracklet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SfmConfig {
    pub view_graph: ViewGraphConfig,
    pub landmarks: LandmarkConfig,
    pub bundle: BundleConfig,
    /// Triangulate-then-adjust rounds; later rounds re-triangulate with the
    /// refined poses.
    pub bundle_rounds: usize,
    pub min_registered_fraction: f64,
    /// Total runs, each with a fresh seed, until one registers enough frames.
    pub max_attempts: u32,
    /// Fewer surviving landmarks than this means the poses are unconstrained.
    pub min_landmarks: usize,
    pub dedup_correspondences: bool,
    /// Video length; inferred from tracklets and masks when absent.
    pub num_frames: Option<u32>,
    pub fps: f64,
}

impl Default for SfmConfig {
    fn default() -> Self {
        Self {
            view_graph: ViewGraphConfig::default(),
            landmarks: LandmarkConfig::default(),
            bundle: BundleConfig::default(),
            bundle_rounds: 2,
            min_registered_fraction: 0.8,
            max_attempts: 3,
            min_landmarks: 8,
            dedup_correspondences: false,
            num_frames: None,
            fps: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SfmStatus {
    Registered,
    Failed { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum SfmFlag {
    /// The pair looked like pure rotation; its direction was not used.
    DegenerateTranslation { i: u32, j: u32 },
    /// Every direction was parallel; spacing along the path was assumed even.
    CollinearMotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub trajectory: Trajectory,
    pub landmarks: Vec<Landmark>,
    pub mean_reprojection_error: f64,
    pub intrinsics: CameraIntrinsics,
    pub status: SfmStatus,
    pub flags: Vec<SfmFlag>,
    pub attempts: u32,
}

impl SceneModel {
    fn failed(num_frames: u32, fps: f64, k: &CameraIntrinsics, reason: String) -> Self {
        SceneModel {
            trajectory: Trajectory { frames: (0..num_frames).map(|f| (f, None)).collect(), fps },
            landmarks: Vec::new(),
            mean_reprojection_error: f64::INFINITY,
            intrinsics: *k,
            status: SfmStatus::Failed { reason },
            flags: Vec::new(),
            attempts: 1,
        }
    }

    pub fn registered_fraction(&self) -> f64 {
        self.trajectory.registered_fraction()
    }

    pub fn is_registered(&self) -> bool {
        self.status == SfmStatus::Registered
    }
}

fn infer_num_frames(tracklets: &[Tracklet], masks: &BTreeMap<u32, DynamicMask>) -> u32 {
    let t = tracklets.iter().filter(|t| !t.points.is_empty()).map(|t| t.end_frame() + 1).max().unwrap_or(0);
    let m = masks.keys().next_back().map_or(0, |f| f + 1);
    t.max(m)
}


fn attempt(
    tracklets: &[Tracklet],
    masks: &BTreeMap<u32, DynamicMask>,
    k: &CameraIntrinsics,
    config: &SfmConfig,
    num_frames: u32,
    seed: u64,
) -> Result<SceneModel, SfmError> {
    let corr = extract_correspondences(tracklets, masks, &ExtractOptions { dedup: config.dedup_correspondences, num_frames: Some(num_frames) });
    let graph = build_view_graph(&corr, k, &config.view_graph, seed)?;
    let rotations = rotation_averaging(&graph)?;
    let mut positions = position_averaging(&graph, &rotations)?;
    if let Ok(centers) = track_positioning(tracklets, masks, &rotations, k) {
        let baselines: Vec<f64> = graph
            .edges
            .iter()
            .filter_map(|e| Some((centers.get(&e.j)? - centers.get(&e.i)?).norm()))
            .collect();
        let mean = baselines.iter().sum::<f64>() / baselines.len().max(1) as f64;
        if mean > 0.0 {
            positions.centers = centers.into_iter().map(|(f, c)| (f, c / mean)).collect();
        }
    }

    let mut flags: Vec<SfmFlag> =
        graph.edges.iter().filter(|e| e.degenerate_translation).map(|e| SfmFlag::DegenerateTranslation { i: e.i, j: e.j }).collect();
    if positions.collinear {
        flags.push(SfmFlag::CollinearMotion);
    }
    let frames = (0..num_frames)
        .map(|f| {
            let pose = rotations.get(&f).zip(positions.centers.get(&f)).map(|(r, c)| Pose::from_center(*r, c));
            (f, pose)
        })
        .collect();
    let mut model = SceneModel {
        trajectory: Trajectory::new(frames, config.fps)?,
        landmarks: Vec::new(),
        mean_reprojection_error: 0.0,
        intrinsics: *k,
        status: SfmStatus::Registered,
        flags,
        attempts: 1,
    };
    for round in 0..config.bundle_rounds.max(1) {
        let landmarks = triangulate_landmarks(tracklets, masks, &model.trajectory, &model.intrinsics, &config.landmarks);
        // later rounds only pay off when better poses admit more landmarks
        if round > 0 && landmarks.len() <= model.landmarks.len() {
            break;
        }
        model.landmarks = landmarks;
        let (adjusted, report) = bundle_adjust(&model, &config.bundle)?;
        info!(
            "bundle adjustment: {} landmarks, {} iterations, mean error {:.3e} px",
            adjusted.landmarks.len(),
            report.iterations,
            report.mean_reprojection_error
        );
        model = adjusted;
    }
    let fraction = model.registered_fraction();
    if !graph.edges.is_empty() && graph.edges.iter().all(|e| e.degenerate_translation) {
        model.status = SfmStatus::Failed { reason: "no view pair has measurable translation".into() };
    } else if model.landmarks.len() < config.min_landmarks {
        model.status =
            SfmStatus::Failed { reason: format!("{} landmarks survived, {} needed", model.landmarks.len(), config.min_landmarks) };
    } else if fraction < config.min_registered_fraction {
        model.status = SfmStatus::Failed {
            reason: format!("less than {:.0}% of frames registered ({:.1}%)", config.min_registered_fraction * 100.0, fraction * 100.0),
        };
    }
    Ok(model)
}

/// Correspondences, view graph, rotations, positions, triangulation and
/// bundle adjustment. Failed runs are repeated with new seeds up to
/// `max_attempts`; the best-registered attempt is returned. Stage errors do not
/// propagate: they yield a FAILED model with the reason.
pub fn run_pipeline(
    tracklets: &[Tracklet],
    masks: &BTreeMap<u32, DynamicMask>,
    k: &CameraIntrinsics,
    config: &SfmConfig,
    seed: u64,
) -> Result<SceneModel, SfmError> {
    for t in tracklets {
        t.validate()?;
    }
    k.validate()?;
    let num_frames = config.num_frames.unwrap_or_else(|| infer_num_frames(tracklets, masks));
    let mut best: Option<SceneModel> = None;
    for a in 0..config.max_attempts.max(1) {
        let s = if a == 0 { seed } else { pair_seed(seed, a) };
        let mut model = attempt(tracklets, masks, k, config, num_frames, s)
            .unwrap_or_else(|e| SceneModel::failed(num_frames, config.fps, k, e.to_string()));
        model.attempts = a + 1;
        if model.is_registered() {
            return Ok(model);
        }
        warn!("structure from motion attempt {} failed: {:?}", a + 1, model.status);
        if best.as_ref().is_none_or(|b| model.registered_fraction() > b.registered_fraction()) {
            best = Some(model);
        } else if let Some(b) = best.as_mut() {
            b.attempts = a + 1;
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// Indices of models kept: registered, mean reprojection error below the
/// threshold and, optionally, every frame registered.
pub fn quality_filter(models: &[SceneModel], reproj_threshold: f64, require_full_registration: bool) -> Vec<usize> {
    models
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            // an infinite threshold keeps everything, including non-finite errors
            (reproj_threshold == f64::INFINITY || m.mean_reprojection_error < reproj_threshold)
                && (!require_full_registration || m.registered_fraction() == 1.0)
        })
        .map(|(i, _)| i)
        .collect()
}
