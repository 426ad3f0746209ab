use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalConfig, EvalError};
use crate::geometry::{relative_pose, umeyama_align, Pose, Similarity, Trajectory, Vec3};

/// Trajectory accuracy of one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub ate: f64,
    pub rpe_trans: f64,
    /// Degrees.
    pub rpe_rot: f64,
    pub registered_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rpe {
    pub trans: f64,
    /// Degrees.
    pub rot: f64,
}

/// Completes `frames` with the pose of the nearest registered frame (ties go
/// to the earlier frame), or the identity when nothing is registered.
/// Registered poses are copied unchanged.
fn fill_frames(pred: &Trajectory, frames: impl Iterator<Item = u32>) -> Trajectory {
    let reg: Vec<(u32, Pose)> = pred.registered().map(|(f, p)| (f, *p)).collect();
    let nearest = |f: u32| -> Pose {
        let i = reg.partition_point(|(g, _)| *g < f);
        let after = reg.get(i);
        let before = i.checked_sub(1).map(|j| &reg[j]);
        match (before, after) {
            (_, Some((g, p))) if *g == f => *p,
            (Some((b, pb)), Some((a, pa))) => {
                if f - b <= a - f {
                    *pb
                } else {
                    *pa
                }
            }
            (Some((_, p)), None) | (None, Some((_, p))) => *p,
            (None, None) => Pose::identity(),
        }
    };
    Trajectory { frames: frames.map(|f| (f, Some(nearest(f)))).collect(), fps: pred.fps }
}

/// Complete trajectory over frames `0..total_frames`.
pub fn fill_trajectory(pred: &Trajectory, total_frames: u32) -> Trajectory {
    fill_frames(pred, 0..total_frames)
}

/// Stand-in for a reconstruction that did not converge: identity rotations
/// and translations drawn uniformly from `[-1, 1]^3`.
pub fn random_fill(total_frames: u32, fps: f64, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = (0..total_frames)
        .map(|_| {
            let t = Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            Pose::new(Default::default(), t)
        })
        .collect();
    Trajectory::from_poses(poses, fps)
}

fn check_complete(gt: &Trajectory, pred: &Trajectory) -> Result<(), EvalError> {
    if gt.len() != pred.len() || gt.frames.iter().zip(&pred.frames).any(|(a, b)| a.0 != b.0) {
        return Err(EvalError::Mismatch(format!("{} ground-truth frames vs {} predicted", gt.len(), pred.len())));
    }
    if let Some((f, _)) = gt.frames.iter().chain(&pred.frames).find(|(_, p)| p.is_none()) {
        return Err(EvalError::Mismatch(format!("frame {f} is not registered")));
    }
    Ok(())
}

fn alignment(gt: &Trajectory, pred: &Trajectory) -> Result<Similarity, EvalError> {
    check_complete(gt, pred)?;
    Ok(umeyama_align(pred, gt, true)?)
}

/// Root-mean-square camera-center error after aligning `pred` onto `gt`
/// with a similarity.
pub fn ate(gt: &Trajectory, pred: &Trajectory) -> Result<f64, EvalError> {
    let sim = alignment(gt, pred)?;
    let sq: f64 = gt.common_centers(pred).iter().map(|(_, g, p)| (sim.apply(p) - g).norm_squared()).sum();
    Ok((sq / gt.len() as f64).sqrt())
}

/// Mean relative-pose error over consecutive frames. With `align`, the
/// prediction first goes through the same similarity as [`ate`].
pub fn rpe(gt: &Trajectory, pred: &Trajectory, align: bool) -> Result<Rpe, EvalError> {
    let pred = if align {
        alignment(gt, pred)?.apply_trajectory(pred)
    } else {
        check_complete(gt, pred)?;
        pred.clone()
    };
    let poses = |t: &Trajectory| -> Vec<Pose> { t.frames.iter().map(|(_, p)| p.expect("checked complete")).collect() };
    let (g, p) = (poses(gt), poses(&pred));
    let n = g.len().saturating_sub(1);
    if n == 0 {
        return Ok(Rpe { trans: 0.0, rot: 0.0 });
    }
    let (mut trans, mut rot) = (0.0, 0.0);
    for i in 0..n {
        let rg = relative_pose(&g[i], &g[i + 1]);
        let rp = relative_pose(&p[i], &p[i + 1]);
        trans += (rg.translation - rp.translation).norm();
        rot += rg.rotation.angle_to(&rp.rotation).to_degrees();
    }
    Ok(Rpe { trans: trans / n as f64, rot: rot / n as f64 })
}

/// Fills `pred` against the ground-truth frames and computes every
/// trajectory metric. `None` marks a reconstruction that did not converge;
/// it is replaced by [`random_fill`].
pub fn trajectory_report(gt: &Trajectory, pred: Option<&Trajectory>, config: &EvalConfig) -> Result<TrajectoryReport, EvalError> {
    let frames = || gt.frames.iter().map(|(f, _)| *f);
    let (filled, registered) = match pred {
        Some(p) => {
            let reg = frames().filter(|&f| p.pose(f).is_some()).count();
            (fill_frames(p, frames()), reg)
        }
        None => {
            let mut r = random_fill(gt.len() as u32, gt.fps, config.random_fill_seed);
            r.frames.iter_mut().zip(frames()).for_each(|(slot, f)| slot.0 = f);
            (r, 0)
        }
    };
    let r = rpe(gt, &filled, config.align_rpe)?;
    Ok(TrajectoryReport {
        ate: ate(gt, &filled)?,
        rpe_trans: r.trans,
        rpe_rot: r.rot,
        registered_fraction: if gt.is_empty() { 0.0 } else { registered as f64 / gt.len() as f64 },
    })
}
