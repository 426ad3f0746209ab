use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SynthScene;
use crate::geometry::{Point2, Pose, Vec3};
use crate::sfm::{Landmark, SceneModel, SfmStatus};

/// Ground-truth reconstruction of a scene's static points: true poses, true
/// points, and their projections with optional Gaussian pixel noise. Points
/// seen in fewer than two frames are left out.
pub fn ground_truth_model(scene: &SynthScene, noise_px: f64, seed: u64) -> SceneModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_px.max(0.0)).expect("finite noise");
    let landmarks = (0..scene.static_points.len())
        .filter_map(|i| {
            let observations: Vec<(u32, Point2)> = (0..scene.num_frames())
                .filter_map(|f| scene.observe(i, f).map(|p| (f, p)))
                .map(|(f, p)| (f, Point2::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))))
                .collect();
            (observations.len() >= 2).then(|| Landmark { tracklet: i as u64, point: scene.static_points[i], observations })
        })
        .collect();
    SceneModel {
        trajectory: scene.gt_trajectory.clone(),
        landmarks,
        mean_reprojection_error: 0.0,
        intrinsics: scene.intrinsics,
        status: SfmStatus::Registered,
        flags: Vec::new(),
        attempts: 1,
    }
}

/// Rotates every pose by `angle` radians about a random axis and moves its
/// translation by `fraction` of its length in a random direction.
pub fn perturb_poses(model: &SceneModel, angle: f64, fraction: f64, seed: u64) -> SceneModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let mut out = model.clone();
    for (_, pose) in out.trajectory.frames.iter_mut() {
        if let Some(p) = pose {
            let w = unit(&mut rng) * angle;
            let dt = unit(&mut rng) * fraction * p.translation.norm();
            *p = Pose::new(nalgebra::UnitQuaternion::from_scaled_axis(w) * p.rotation, p.translation + dt);
        }
    }
    out
}
