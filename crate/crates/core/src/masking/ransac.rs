use nalgebra::{Matrix3, SMatrix};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MaskError;
use crate::geometry::epipolar::sampson_unchecked;
use crate::geometry::{FundamentalMatrix, Mat3, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub confidence: f64,
    /// Inlier threshold on the Sampson distance, in pixels (compared squared).
    pub threshold_px: f64,
    pub min_inlier_ratio: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, confidence: 0.99, threshold_px: 1.0, min_inlier_ratio: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalEstimate {
    pub f: FundamentalMatrix,
    pub inliers: Vec<bool>,
}

impl FundamentalEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn hartley_transform(pts: &[Point2]) -> Mat3 {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalized eight-point fundamental matrix (rank 2 enforced) from `n >= 8` matches.
///
/// The returned matrix is not scale-normalized; `None` for degenerate input.
/// Null vector of exactly eight constraint rows by Gaussian elimination with
/// full pivoting; `None` for other counts or near rank loss.
fn minimal_null_vector(rows: &[SMatrix<f64, 1, 9>]) -> Option<SMatrix<f64, 9, 1>> {
    if rows.len() != 8 {
        return None;
    }
    let mut a = [[0.0f64; 9]; 8];
    for (r, row) in rows.iter().enumerate() {
        for c in 0..9 {
            a[r][c] = row[c];
        }
    }
    let mut cols: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    for k in 0..8 {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for (r, row) in a.iter().enumerate().skip(k) {
            for c in k..9 {
                if row[cols[c]].abs() > best {
                    (pr, pc, best) = (r, c, row[cols[c]].abs());
                }
            }
        }
        // rows are unit-scale after normalization, so a tiny pivot means rank loss
        if best < 1e-10 {
            return None;
        }
        a.swap(k, pr);
        cols.swap(k, pc);
        let piv = a[k][cols[k]];
        for r in k + 1..8 {
            let f = a[r][cols[k]] / piv;
            if f != 0.0 {
                for c in k..9 {
                    a[r][cols[c]] -= f * a[k][cols[c]];
                }
            }
        }
    }
    // the last permuted column is free; back-substitute the rest
    let mut v = SMatrix::<f64, 9, 1>::zeros();
    v[cols[8]] = 1.0;
    for k in (0..8).rev() {
        let sum: f64 = (k + 1..9).map(|c| a[k][cols[c]] * v[cols[c]]).sum();
        v[cols[k]] = -sum / a[k][cols[k]];
    }
    Some(v.normalize())
}

pub fn eight_point(p1: &[Point2], p2: &[Point2]) -> Option<Mat3> {
    debug_assert_eq!(p1.len(), p2.len());
    if p1.len() < 8 {
        return None;
    }
    let t1 = hartley_transform(p1);
    let t2 = hartley_transform(p2);
    let rows: Vec<SMatrix<f64, 1, 9>> = p1
        .iter()
        .zip(p2)
        .map(|(a, b)| {
            let a = t1.transform_point(a);
            let b = t2.transform_point(b);
            SMatrix::<f64, 1, 9>::from_row_slice(&[b.x * a.x, b.x * a.y, b.x, b.y * a.x, b.y * a.y, b.y, a.x, a.y, 1.0])
        })
        .collect();
    let v = match minimal_null_vector(&rows) {
        Some(v) => v,
        None => {
            let ata: SMatrix<f64, 9, 9> = rows.iter().map(|r| r.transpose() * r).sum();
            let eig = ata.symmetric_eigen();
            let (i_min, _) = eig.eigenvalues.argmin();
            eig.eigenvectors.column(i_min).into_owned()
        }
    };
    if !v.iter().all(|x| x.is_finite()) {
        return None;
    }
    let f = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
    let mut svd = f.svd(true, true);
    let (i_small, _) = svd.singular_values.argmin();
    svd.singular_values[i_small] = 0.0;
    let f = svd.recompose().ok()?;
    Some(t2.transpose() * f * t1)
}

fn score(f: &Mat3, p1: &[Point2], p2: &[Point2], thresh2: f64) -> (usize, f64, Vec<bool>) {
    let mut inliers = vec![false; p1.len()];
    let mut count = 0;
    let mut cost = 0.0;
    for (i, (a, b)) in p1.iter().zip(p2).enumerate() {
        let e = sampson_unchecked(f, a.x, a.y, b.x, b.y);
        if e <= thresh2 {
            inliers[i] = true;
            count += 1;
            cost += e;
        } else {
            cost += thresh2;
        }
    }
    (count, cost, inliers)
}

fn required_iterations(inlier_ratio: f64, confidence: f64, sample: usize) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil().max(1.0) as usize
}

/// Eight-point RANSAC with a Sampson inlier test, refit on the final inliers.
/// Deterministic for a given seed.
pub fn estimate_fundamental_ransac(
    matches: &[(Point2, Point2)],
    config: &RansacConfig,
    seed: u64,
) -> Result<FundamentalEstimate, MaskError> {
    let n = matches.len();
    if n < 8 {
        return Err(MaskError::TooFewMatches(n));
    }
    let p1: Vec<Point2> = matches.iter().map(|m| m.0).collect();
    let p2: Vec<Point2> = matches.iter().map(|m| m.1).collect();
    let thresh2 = config.threshold_px * config.threshold_px;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best: Option<(usize, f64, Mat3)> = None;
    let mut needed = config.max_iterations;
    let mut it = 0;
    let (mut s1, mut s2) = (Vec::with_capacity(8), Vec::with_capacity(8));
    while it < needed.min(config.max_iterations) {
        it += 1;
        s1.clear();
        s2.clear();
        for i in sample(&mut rng, n, 8).iter() {
            s1.push(p1[i]);
            s2.push(p2[i]);
        }
        let Some(f) = eight_point(&s1, &s2) else { continue };
        let (count, cost, _) = score(&f, &p1, &p2, thresh2);
        let better = match &best {
            None => true,
            Some((bc, bcost, _)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            best = Some((count, cost, f));
            needed = required_iterations(count as f64 / n as f64, config.confidence, 8);
        }
    }

    let Some((mut count, _, mut f)) = best else {
        return Err(MaskError::NoConsensus { ratio: 0.0, min: config.min_inlier_ratio });
    };
    let (_, _, mut inliers) = score(&f, &p1, &p2, thresh2);
    // Local refinement: refit on the consensus set while it does not shrink.
    for _ in 0..3 {
        let (i1, i2): (Vec<Point2>, Vec<Point2>) =
            inliers.iter().zip(matches).filter(|(&b, _)| b).map(|(_, m)| (m.0, m.1)).unzip();
        let Some(refit) = eight_point(&i1, &i2) else { break };
        let (c, _, inl) = score(&refit, &p1, &p2, thresh2);
        if c < count {
            break;
        }
        let grew = c > count;
        count = c;
        f = refit;
        inliers = inl;
        if !grew {
            break;
        }
    }
    let ratio = count as f64 / n as f64;
    if ratio < config.min_inlier_ratio {
        return Err(MaskError::NoConsensus { ratio, min: config.min_inlier_ratio });
    }
    Ok(FundamentalEstimate { f: FundamentalMatrix::normalized(f), inliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Point3, Pose, Vec3};
    use nalgebra::UnitQuaternion;
    use rand::Rng;

    fn two_views() -> (CameraIntrinsics, Pose, Pose) {
        let k = CameraIntrinsics::centered(500.0, 640, 480).unwrap();
        let a = Pose::identity();
        let b = Pose::from_center(UnitQuaternion::from_euler_angles(0.02, -0.05, 0.01), &Vec3::new(0.6, 0.1, 0.05));
        (k, a, b)
    }

    fn static_matches(n: usize, seed: u64) -> Vec<(Point2, Point2)> {
        let (k, a, b) = two_views();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let x = Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..10.0));
            if let (Some(pa), Some(pb)) = (a.project(&k, &x), b.project(&k, &x)) {
                out.push((pa, pb));
            }
        }
        out
    }

    #[test]
    fn exact_static_scene_all_inliers() {
        let m = static_matches(200, 60);
        let est = estimate_fundamental_ransac(&m, &RansacConfig::default(), 7).unwrap();
        assert_eq!(est.inlier_count(), 200);
        for (p1, p2) in &m {
            assert!(est.f.residual(p1, p2).abs() < 1e-9);
        }
    }

    #[test]
    fn moving_matches_rejected() {
        let (k, a, b) = two_views();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut m = static_matches(140, 62);
        let mut dynamic = Vec::new();
        while dynamic.len() < 60 {
            let x = Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..10.0));
            // independent motion between the two exposures
            let moved = x + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            if let (Some(pa), Some(pb)) = (a.project(&k, &x), b.project(&k, &moved)) {
                dynamic.push((pa, pb));
            }
        }
        m.extend(dynamic);
        let est = estimate_fundamental_ransac(&m, &RansacConfig::default(), 8).unwrap();
        let dyn_kept = est.inliers[140..].iter().filter(|&&b| b).count();
        assert!(dyn_kept <= 6, "kept {dyn_kept} of 60 moving matches");
        assert!(est.inliers[..140].iter().all(|&b| b));
    }

    #[test]
    fn too_few_matches() {
        let m = static_matches(7, 63);
        assert_eq!(estimate_fundamental_ransac(&m, &RansacConfig::default(), 1), Err(MaskError::TooFewMatches(7)));
    }

    #[test]
    fn pure_noise_has_no_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let m: Vec<(Point2, Point2)> = (0..100)
            .map(|_| {
                (
                    Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                    Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                )
            })
            .collect();
        let r = estimate_fundamental_ransac(&m, &RansacConfig { max_iterations: 300, ..Default::default() }, 2);
        assert!(matches!(r, Err(MaskError::NoConsensus { .. })));
    }

    #[test]
    fn deterministic_per_seed() {
        let m = static_matches(50, 65);
        let a = estimate_fundamental_ransac(&m, &RansacConfig::default(), 99).unwrap();
        let b = estimate_fundamental_ransac(&m, &RansacConfig::default(), 99).unwrap();
        assert_eq!(a, b);
    }
}
