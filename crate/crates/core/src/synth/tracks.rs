use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SynthScene;
use crate::geometry::{Point2, Point3};
use crate::masking::{DynamicMask, FlowField};
use crate::tracking::{window_schedule, TrackError, Tracklet};

/// Tracking windows, observation noise and rasterization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub stride_seconds: f64,
    pub length_seconds: f64,
    pub noise_px: f64,
    pub mask_radius: f64,
    pub with_flows: bool,
    /// Mean depth of the background surface that fills pixels with no point.
    /// The surface is rippled so the background alone constrains the epipolar
    /// geometry; a plane would only fix a homography.
    pub background_depth: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { stride_seconds: 5.0 / 12.0, length_seconds: 2.5, noise_px: 0.0, mask_radius: 6.0, with_flows: false, background_depth: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTracks {
    pub tracklets: Vec<Tracklet>,
    /// One ground-truth mask per frame.
    pub masks: Vec<DynamicMask>,
    /// Forward (t to t+1) and backward (t+1 to t) flow for each consecutive pair.
    pub flows: Vec<(FlowField, FlowField)>,
    pub dynamic_ids: BTreeSet<u64>,
}

/// Tracklet ids encode the window and the scene point.
pub const WINDOW_ID_STRIDE: u64 = 1_000_000;

impl SynthTracks {
    pub fn point_index(id: u64) -> usize {
        (id % WINDOW_ID_STRIDE) as usize
    }

    pub fn mask_map(&self) -> std::collections::BTreeMap<u32, DynamicMask> {
        self.masks.iter().map(|m| (m.frame_index, m.clone())).collect()
    }
}

/// One tracklet per scene point and window, seeded where the point is visible.
pub fn project_tracks(scene: &SynthScene, config: &TrackConfig, seed: u64) -> Result<SynthTracks, TrackError> {
    let n = scene.num_frames();
    let k = &scene.intrinsics;
    let schedule = window_schedule(n, scene.fps(), config.stride_seconds, config.length_seconds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise_px.max(0.0)).expect("finite noise level");

    // observations[i][f]
    let observations: Vec<Vec<Option<Point2>>> =
        (0..scene.num_points()).map(|i| (0..n).map(|f| scene.observe(i, f)).collect()).collect();

    let mut tracklets = Vec::new();
    let mut dynamic_ids = BTreeSet::new();
    for w in 0..schedule.starts.len() {
        let frames = schedule.frames(w, n);
        for (i, obs) in observations.iter().enumerate() {
            let span = &obs[frames.start as usize..frames.end as usize];
            if span.iter().filter(|o| o.is_some()).count() < 2 {
                continue;
            }
            let mut last = span.iter().flatten().next().copied().expect("visible at least twice");
            let mut points = Vec::with_capacity(span.len());
            let mut visible = Vec::with_capacity(span.len());
            for o in span {
                match o {
                    Some(p) => {
                        let jitter = if config.noise_px > 0.0 {
                            Point2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                        } else {
                            Point2::origin()
                        };
                        let p = Point2::new(p.x + jitter.x, p.y + jitter.y);
                        last = p;
                        points.push(p);
                        visible.push(true);
                    }
                    None => {
                        points.push(last);
                        visible.push(false);
                    }
                }
            }
            let id = w as u64 * WINDOW_ID_STRIDE + i as u64;
            if scene.is_dynamic(i) {
                dynamic_ids.insert(id);
            }
            tracklets.push(Tracklet { id, start_frame: frames.start, points, visible });
        }
    }

    let masks = (0..n)
        .map(|f| {
            let mut m = DynamicMask::empty(f, k.width, k.height);
            for i in scene.static_points.len()..scene.num_points() {
                let pc = scene.pose(f).transform(&scene.point(i, f));
                if pc.z < 0.1 {
                    continue;
                }
                if let Some(p) = k.project(&pc) {
                    m.fill_disk(p.x, p.y, config.mask_radius);
                }
            }
            m
        })
        .collect();

    let flows = if config.with_flows && n > 1 {
        (0..n - 1).map(|f| flow_pair(scene, f, config)).collect()
    } else {
        Vec::new()
    };

    Ok(SynthTracks { tracklets, masks, flows, dynamic_ids })
}

/// Dense flow between `frame` and `frame + 1` in both directions.
pub fn flow_pair(scene: &SynthScene, frame: u32, config: &TrackConfig) -> (FlowField, FlowField) {
    (flow_field(scene, frame, frame + 1, config), flow_field(scene, frame + 1, frame, config))
}

/// Background pixels move like a rippled surface around `background_depth`;
/// points overwrite the pixel they round to (nearest
/// wins); dynamic points overwrite their whole mask disk.
fn flow_field(scene: &SynthScene, from: u32, to: u32, config: &TrackConfig) -> FlowField {
    let k = &scene.intrinsics;
    let (pa, pb) = (scene.pose(from), scene.pose(to));
    let mut field = FlowField::zeros(from, k.width, k.height);
    for y in 0..k.height {
        for x in 0..k.width {
            let p = Point2::new(x as f64, y as f64);
            let (u, v) = (p.x / k.width as f64, p.y / k.height as f64);
            let depth = config.background_depth * (1.0 + 0.3 * (3.0 * std::f64::consts::TAU * u).sin() * (2.0 * std::f64::consts::TAU * v).cos());
            let cam = k.unproject(&p) * depth;
            let world = pa.inverse().transform(&Point3::from(cam));
            if let Some(q) = pb.project(k, &Point3::from(world)) {
                field.set(x, y, [(q.x - p.x) as f32, (q.y - p.y) as f32]);
            }
        }
    }

    let displacement = |i: usize| -> Option<(Point2, f64, [f32; 2])> {
        let ca = pa.transform(&scene.point(i, from));
        if ca.z < 0.1 {
            return None;
        }
        let a = k.project(&ca)?;
        let b = pb.project(k, &scene.point(i, to))?;
        Some((a, ca.z, [(b.x - a.x) as f32, (b.y - a.y) as f32]))
    };

    let mut depth = vec![f64::INFINITY; field.data.len()];
    for i in 0..scene.static_points.len() {
        let Some((a, z, d)) = displacement(i) else { continue };
        let (x, y) = (a.x.round(), a.y.round());
        if x < 0.0 || y < 0.0 || x >= k.width as f64 || y >= k.height as f64 {
            continue;
        }
        let idx = y as usize * k.width as usize + x as usize;
        if z < depth[idx] {
            depth[idx] = z;
            field.data[idx] = d;
        }
    }
    for i in scene.static_points.len()..scene.num_points() {
        let Some((a, _, d)) = displacement(i) else { continue };
        let mut disk = DynamicMask::empty(from, k.width, k.height);
        disk.fill_disk(a.x, a.y, config.mask_radius);
        for (idx, _) in disk.bits.iter().enumerate().filter(|(_, b)| **b) {
            field.data[idx] = d;
        }
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::triangulate_views;
    use crate::synth::{gen_scene, SceneConfig, TrajectoryKind};

    fn scene(kind: TrajectoryKind) -> SynthScene {
        gen_scene(11, &SceneConfig { n_static: 60, n_dynamic: 20, trajectory_kind: kind, num_frames: 30, ..Default::default() })
    }

    #[test]
    fn noiseless_tracks_triangulate_back() {
        let s = scene(TrajectoryKind::Orbit);
        let t = project_tracks(&s, &TrackConfig::default(), 0).unwrap();
        let mut checked = 0;
        for tr in t.tracklets.iter().filter(|tr| !t.dynamic_ids.contains(&tr.id)) {
            let views: Vec<_> = tr.observations().map(|(f, p)| (s.pose(f), s.intrinsics, p)).collect();
            let x = triangulate_views(&views).unwrap();
            for (pose, k, p) in &views {
                let q = pose.project(k, &x.point).unwrap();
                assert!((q - p).norm() < 1e-9);
            }
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn behind_camera_is_invisible() {
        let s = scene(TrajectoryKind::ForwardArc);
        let mut moved = s.clone();
        // put one static point behind every camera
        let behind = s.pose(0).inverse().transform(&Point3::new(0.0, 0.0, -3.0));
        moved.static_points[0] = Point3::from(behind);
        assert!(moved.observe(0, 0).is_none());
        let t = project_tracks(&moved, &TrackConfig::default(), 0).unwrap();
        assert!(t.tracklets.iter().filter(|tr| SynthTracks::point_index(tr.id) == 0).all(|tr| !tr.visible[0] || tr.start_frame != 0));
    }

    #[test]
    fn masks_are_disks_along_dynamic_paths() {
        let s = scene(TrajectoryKind::Pan);
        let cfg = TrackConfig::default();
        let t = project_tracks(&s, &cfg, 0).unwrap();
        for f in [0u32, 13, 29] {
            let m = &t.masks[f as usize];
            let centers: Vec<Point2> = (s.static_points.len()..s.num_points())
                .filter_map(|i| {
                    let pc = s.pose(f).transform(&s.point(i, f));
                    (pc.z >= 0.1).then(|| s.intrinsics.project(&pc)).flatten()
                })
                .collect();
            for y in 0..m.height {
                for x in 0..m.width {
                    let inside = centers.iter().any(|c| (c.x - x as f64).powi(2) + (c.y - y as f64).powi(2) <= 36.0);
                    assert_eq!(m.get(x, y), inside, "frame {f} pixel {x},{y}");
                }
            }
        }
    }

    #[test]
    fn flows_match_tracklet_steps() {
        let s = scene(TrajectoryKind::Orbit);
        let cfg = TrackConfig { with_flows: true, ..Default::default() };
        let t = project_tracks(&s, &cfg, 0).unwrap();
        assert_eq!(t.flows.len(), 29);
        // static points whose pixel no other point or dynamic disk touches
        let mut checked = 0;
        for f in 0..29u32 {
            let (fwd, _) = &t.flows[f as usize];
            let owners = |x: i64, y: i64| {
                (0..s.num_points())
                    .filter(|&j| {
                        let Some(p) = s.observe(j, f) else { return false };
                        if s.is_dynamic(j) {
                            (p.x - x as f64).powi(2) + (p.y - y as f64).powi(2) <= 36.0
                        } else {
                            p.x.round() as i64 == x && p.y.round() as i64 == y
                        }
                    })
                    .count()
            };
            for tr in t.tracklets.iter().filter(|tr| !t.dynamic_ids.contains(&tr.id)) {
                let (Some((a, true)), Some((b, true))) = (tr.at(f), tr.at(f + 1)) else { continue };
                let (x, y) = (a.x.round() as i64, a.y.round() as i64);
                if owners(x, y) != 1 {
                    continue;
                }
                let v = fwd.at(x as u32, y as u32);
                assert_eq!(v, [(b.x - a.x) as f32, (b.y - a.y) as f32]);
                checked += 1;
            }
        }
        assert!(checked > 500, "{checked}");
    }

    #[test]
    fn noise_is_seeded() {
        let s = scene(TrajectoryKind::Orbit);
        let cfg = TrackConfig { noise_px: 0.5, ..Default::default() };
        assert_eq!(project_tracks(&s, &cfg, 3).unwrap(), project_tracks(&s, &cfg, 3).unwrap());
        assert_ne!(project_tracks(&s, &cfg, 3).unwrap().tracklets, project_tracks(&s, &cfg, 4).unwrap().tracklets);
    }

    #[test]
    fn dynamic_points_trip_motion_masks() {
        use crate::masking::{motion_segment, MotionConfig};
        let s = scene(TrajectoryKind::Orbit);
        let cfg = TrackConfig { with_flows: true, ..Default::default() };
        let t = project_tracks(&s, &cfg, 0).unwrap();
        let (mut hit, mut gt, mut false_pos, mut pred) = (0usize, 0usize, 0usize, 0usize);
        for (f, (fwd, bwd)) in t.flows.iter().enumerate() {
            let m = motion_segment(fwd, bwd, &MotionConfig::default(), f as u64).unwrap();
            // backward errors live on frame f + 1 positions
            let (g, g_next) = (&t.masks[f], &t.masks[f + 1]);
            for ((a, b), c) in m.bits.iter().zip(&g.bits).zip(&g_next.bits) {
                hit += (*a && *b) as usize;
                gt += *b as usize;
                false_pos += (*a && !*b && !*c) as usize;
                pred += *a as usize;
            }
        }
        let recall = hit as f64 / gt as f64;
        let fp = false_pos as f64 / pred.max(1) as f64;
        // misses are turning points and motion along epipolar lines
        assert!(recall > 0.5 && fp < 0.01, "recall {recall} fp {fp}");
    }
}
