use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, UnitQuaternion};

use super::SfmError;
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::masking::DynamicMask;
use crate::tracking::{static_observations, Tracklet};

const REWEIGHT_ROUNDS: usize = 3;
/// Cauchy scale of the angular residual, in pixels at the focal length.
const ROBUST_PX: f64 = 2.0;

struct Ray {
    cam: usize,
    dir: Vec3,
    weight: f64,
}

/// Camera centers from the tracks themselves: with rotations known, every
/// observation says the point lies on a world ray from its camera, and
/// cameras plus points are solved jointly from those rays. Unlike pairwise
/// directions this fixes the spacing along near-collinear paths.
///
/// Centers are returned up to scale with the first frame at the origin.
pub fn track_positioning(
    tracklets: &[Tracklet],
    masks: &BTreeMap<u32, DynamicMask>,
    rotations: &BTreeMap<u32, UnitQuaternion<f64>>,
    k: &CameraIntrinsics,
) -> Result<BTreeMap<u32, Vec3>, SfmError> {
    let frames: Vec<u32> = rotations.keys().copied().collect();
    let index: BTreeMap<u32, usize> = frames.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut points: Vec<Vec<Ray>> = tracklets
        .iter()
        .filter_map(|t| {
            let rays: Vec<Ray> = static_observations(t, masks, u32::MAX)
                .into_iter()
                .filter_map(|(f, p)| {
                    let cam = *index.get(&f)?;
                    let dir = (rotations[&f].inverse() * k.unproject(&p)).normalize();
                    Some(Ray { cam, dir, weight: 1.0 })
                })
                .collect();
            let spread = rays.iter().any(|r| r.dir.cross(&rays[0].dir).norm() > 1e-3);
            (rays.len() >= 2 && spread).then_some(rays)
        })
        .collect();
    let m = frames.len();
    if m < 2 || points.is_empty() {
        return Err(SfmError::InsufficientParallax);
    }
    let sigma = ROBUST_PX / (0.5 * (k.fx + k.fy));

    let mut centers = solve(m, &points)?;
    for _ in 0..REWEIGHT_ROUNDS {
        for rays in points.iter_mut() {
            let Some(x) = point_for(rays, &centers) else { continue };
            for r in rays.iter_mut() {
                let v = x - centers[r.cam];
                let len = v.norm().max(1e-9);
                let angle = r.dir.dot(&(v / len)).clamp(-1.0, 1.0).acos();
                r.weight = 1.0 / (1.0 + (angle / sigma).powi(2));
            }
        }
        // a camera with a slightly wrong rotation has every ray off; rescale so
        // reweighting ranks rays within a camera but never mutes a camera
        let mut total = vec![(0.0, 0usize); m];
        for r in points.iter().flatten() {
            total[r.cam].0 += r.weight;
            total[r.cam].1 += 1;
        }
        for r in points.iter_mut().flatten() {
            let (sum, count) = total[r.cam];
            r.weight *= count as f64 / sum.max(f64::MIN_POSITIVE);
        }
        centers = solve(m, &points)?;
    }
    Ok(frames.into_iter().zip(centers).collect())
}

fn point_matrix(rays: &[Ray]) -> Matrix3<f64> {
    rays.iter().map(|r| (Matrix3::identity() - r.dir * r.dir.transpose()) * r.weight).sum()
}

/// Least-squares point for fixed centers.
fn point_for(rays: &[Ray], centers: &[Vec3]) -> Option<Vec3> {
    let p = point_matrix(rays);
    let rhs: Vec3 = rays.iter().map(|r| (Matrix3::identity() - r.dir * r.dir.transpose()) * centers[r.cam] * r.weight).sum();
    p.try_inverse().map(|inv| inv * rhs)
}

/// Smallest eigenvector of the camera system after eliminating the points,
/// with the first camera pinned at the origin.
fn solve(m: usize, points: &[Vec<Ray>]) -> Result<Vec<Vec3>, SfmError> {
    let n = 3 * (m - 1);
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut add = |a: usize, b: usize, blk: &Matrix3<f64>| {
        if a > 0 && b > 0 {
            let mut view = s.fixed_view_mut::<3, 3>(3 * (a - 1), 3 * (b - 1));
            view += blk;
        }
    };
    for rays in points {
        let p = point_matrix(rays);
        let eig = p.symmetric_eigenvalues();
        if eig.min() <= 1e-9 * eig.max() {
            continue;
        }
        let Some(pinv) = p.try_inverse() else { continue };
        let q: Vec<Matrix3<f64>> = rays.iter().map(|r| (Matrix3::identity() - r.dir * r.dir.transpose()) * r.weight).collect();
        for (ra, qa) in rays.iter().zip(&q) {
            add(ra.cam, ra.cam, qa);
            let t = qa * pinv;
            for (rb, qb) in rays.iter().zip(&q) {
                add(ra.cam, rb.cam, &-(t * qb));
            }
        }
    }
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let max = eig.eigenvalues[order[n - 1]];
    if n < 2 || !(max > 0.0) || eig.eigenvalues[order[1]] < 1e-9 * max {
        return Err(SfmError::InsufficientParallax);
    }
    let v = eig.eigenvectors.column(order[0]);
    let mut centers = vec![Vec3::zeros()];
    centers.extend((1..m).map(|x| Vec3::new(v[3 * (x - 1)], v[3 * (x - 1) + 1], v[3 * (x - 1) + 2])));
    // points must end up in front of the cameras
    let front: f64 = points
        .iter()
        .filter_map(|rays| point_for(rays, &centers).map(|x| rays.iter().map(|r| r.dir.dot(&(x - centers[r.cam]))).sum::<f64>()))
        .sum();
    if front < 0.0 {
        centers.iter_mut().for_each(|c| *c = -*c);
    }
    Ok(centers)
}
