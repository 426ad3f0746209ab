use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix3, UnitQuaternion, Vector2};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::epipolar::sampson_unchecked;
use crate::geometry::{CameraIntrinsics, Mat3, Point2, Vec3};
use crate::masking::eight_point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EssentialConfig {
    /// Sampson inlier threshold in pixels.
    pub threshold_px: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    /// A pair is pure rotation when a rotation-only model explains this
    /// share of the essential inliers.
    pub rotation_only_ratio: f64,
}

impl Default for EssentialConfig {
    fn default() -> Self {
        Self { threshold_px: 1.0, max_iterations: 5000, confidence: 0.999, rotation_only_ratio: 0.9 }
    }
}

/// Relative pose of frame j with respect to frame i: `x_j = R x_i + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeEstimate {
    pub rotation: UnitQuaternion<f64>,
    /// Unit translation direction; meaningless when `degenerate_translation`.
    pub direction: Vec3,
    pub inliers: Vec<bool>,
    pub degenerate_translation: bool,
}

impl RelativeEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Nearest essential matrix: singular values forced to (1, 1, 0).
pub fn project_to_essential(e: &Mat3) -> Mat3 {
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0)) * v_t
}

/// Square root of the Sampson error: a signed first-order distance to the
/// epipolar curve.
fn sampson_residual(e: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    let ea = e * a;
    let eb = e.transpose() * b;
    let d = ea.x * ea.x + ea.y * ea.y + eb.x * eb.x + eb.y * eb.y;
    if d < 1e-300 {
        0.0
    } else {
        b.dot(&ea) / d.sqrt()
    }
}

/// Signed Sampson residual and its derivative with respect to the entries of E.
fn sampson_gradient(e: &Mat3, a: &Vec3, b: &Vec3) -> Option<(f64, Mat3)> {
    let ea = e * a;
    let etb = e.transpose() * b;
    let d = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if d < 1e-18 {
        return None;
    }
    let num = b.dot(&ea);
    let sd = d.sqrt();
    // d(d)/dE = 2 (P ea) a^T + 2 b (P etb)^T with P dropping the third row
    let pea = Vec3::new(ea.x, ea.y, 0.0);
    let petb = Vec3::new(etb.x, etb.y, 0.0);
    let dd = (pea * a.transpose() + b * petb.transpose()) * 2.0;
    let de = b * a.transpose() / sd - dd * (num / (2.0 * d * sd));
    Some((num / sd, de))
}

/// Consensus refits and the nonlinear refinement only need to land close to
/// the optimum; evenly strided subsets bound their cost on dense pairs.
const LO_FIT_POINTS: usize = 64;
const REFINE_POINTS: usize = 200;
const PRETEST_POINTS: usize = 32;

fn strided(idx: Vec<usize>, cap: usize) -> Vec<usize> {
    if idx.len() <= cap {
        return idx;
    }
    (0..cap).map(|k| idx[k * idx.len() / cap]).collect()
}

fn essential_from(r: &Mat3, t: &Vec3) -> Mat3 {
    crate::geometry::skew(t) * r
}

/// Gauss-Newton on (R, unit t) minimizing Sampson distance over the inliers,
/// alternating with reclassification. Steps that do not lower the cost are
/// rejected, so exact input stays exact.
fn refine_essential(e: &Mat3, x1: &[Vec3], x2: &[Vec3], classify: &dyn Fn(&Mat3) -> Vec<bool>) -> (Mat3, Vec<bool>) {
    let mut inliers = classify(e);
    let idx = strided((0..x1.len()).filter(|&i| inliers[i]).collect(), REFINE_POINTS);
    let a: Vec<Vec3> = idx.iter().map(|&i| x1[i]).collect();
    let b: Vec<Vec3> = idx.iter().map(|&i| x2[i]).collect();
    let (mut r, mut t, _) = decompose_essential(e, &a, &b);
    let mut best = *e;
    let mut lambda = 1e-3;
    for _round in 0..2 {
        let idx = strided((0..x1.len()).filter(|&i| inliers[i]).collect(), REFINE_POINTS);
        let cost = |r: &Mat3, t: &Vec3| -> f64 {
            let e = essential_from(r, t);
            idx.iter().map(|&i| sampson_residual(&e, &x1[i], &x2[i]).powi(2)).sum()
        };
        let mut current = cost(&r, &t);
        for _ in 0..20 {
            if current < 1e-30 {
                break;
            }
            // tangent basis of the unit translation
            let b1 = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let b1 = (b1 - t * t.dot(&b1)).normalize();
            let b2 = t.cross(&b1);
            let perturb = |p: &nalgebra::Vector5<f64>| -> (Mat3, Vec3) {
                let rr = nalgebra::Rotation3::from_scaled_axis(Vec3::new(p[0], p[1], p[2])).into_inner() * r;
                (rr, (t + b1 * p[3] + b2 * p[4]).normalize())
            };
            // derivatives of E = [t]x R along the five parameters
            let tx = crate::geometry::skew(&t);
            let g: [Mat3; 5] = [
                tx * crate::geometry::skew(&Vec3::x()) * r,
                tx * crate::geometry::skew(&Vec3::y()) * r,
                tx * crate::geometry::skew(&Vec3::z()) * r,
                crate::geometry::skew(&b1) * r,
                crate::geometry::skew(&b2) * r,
            ];
            let e = essential_from(&r, &t);
            let mut jtj = nalgebra::Matrix5::<f64>::zeros();
            let mut jtr = nalgebra::Vector5::<f64>::zeros();
            for &i in &idx {
                let Some((res, de)) = sampson_gradient(&e, &x1[i], &x2[i]) else { continue };
                let j = nalgebra::Vector5::from_fn(|k, _| de.dot(&g[k]));
                jtj += j * j.transpose();
                jtr += j * res;
            }
            let mut improved = false;
            for _ in 0..8 {
                let damped = jtj + nalgebra::Matrix5::from_diagonal(&(jtj.diagonal() * lambda));
                let Some(step) = damped.cholesky().map(|c| c.solve(&-jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let (rn, tn) = perturb(&step);
                let next = cost(&rn, &tn);
                if next < current {
                    let converged = current - next <= 1e-8 * current;
                    (r, t, current) = (rn, tn, next);
                    if converged {
                        break;
                    }
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        best = essential_from(&r, &t);
        let reclassified = classify(&best);
        if reclassified == inliers {
            break;
        }
        inliers = reclassified;
    }
    (best, inliers)
}

/// Depths of a normalized match along both rays for `x2 = R x1 + t`.
fn depths(r: &Mat3, t: &Vec3, a: &Vec3, b: &Vec3) -> (f64, f64) {
    // l1 R a - l2 b = -t, least squares in (l1, l2)
    let ra = r * a;
    let m = Matrix2::new(ra.dot(&ra), -ra.dot(b), -ra.dot(b), b.dot(b));
    let rhs = Vector2::new(-ra.dot(t), b.dot(t));
    match m.try_inverse() {
        Some(inv) => {
            let l = inv * rhs;
            (l[0], l[1])
        }
        None => (0.0, 0.0),
    }
}

/// The four rotation/translation candidates of an essential matrix, picked by
/// the number of matches triangulating in front of both cameras.
pub fn decompose_essential(e: &Mat3, x1: &[Vec3], x2: &[Vec3]) -> (Mat3, Vec3, usize) {
    let svd = e.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut v_t = svd.v_t.unwrap();
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t: Vec3 = u.column(2).into();
    let mut best = (Matrix3::identity(), t, 0usize);
    for r in [u * w * v_t, u * w.transpose() * v_t] {
        for t in [t, -t] {
            let votes = x1
                .iter()
                .zip(x2)
                .filter(|(a, b)| {
                    let (l1, l2) = depths(&r, &t, a, b);
                    l1 > 0.0 && l2 > 0.0
                })
                .count();
            if votes > best.2 {
                best = (r, t, votes);
            }
        }
    }
    best
}

/// Rotation best mapping bearings `a` onto `b` (no translation).
fn rotation_only(a: &[Vec3], b: &[Vec3]) -> Mat3 {
    let m: Mat3 = a.iter().zip(b).map(|(a, b)| b.normalize() * a.normalize().transpose()).sum();
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

fn adaptive_iterations(inlier_ratio: f64, confidence: f64, max: usize) -> usize {
    let good = inlier_ratio.powi(8);
    if good <= 0.0 {
        return max;
    }
    if good >= 1.0 {
        return 1;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, max)
    } else {
        max
    }
}

/// RANSAC over normalized eight-point fits projected to essential matrices.
/// `None` when fewer than eight matches or no model is found.
pub fn estimate_relative_pose(
    k: &CameraIntrinsics,
    p1: &[Point2],
    p2: &[Point2],
    config: &EssentialConfig,
    seed: u64,
) -> Option<RelativeEstimate> {
    let n = p1.len();
    if n < 8 || p2.len() != n {
        return None;
    }
    let x1: Vec<Vec3> = p1.iter().map(|p| k.unproject(p)).collect();
    let x2: Vec<Vec3> = p2.iter().map(|p| k.unproject(p)).collect();
    let n1: Vec<Point2> = x1.iter().map(|x| Point2::new(x.x, x.y)).collect();
    let n2: Vec<Point2> = x2.iter().map(|x| Point2::new(x.x, x.y)).collect();
    // Sampson error is a squared distance; convert the pixel threshold
    let f_mean = 0.5 * (k.fx + k.fy);
    let thresh = (config.threshold_px / f_mean).powi(2);

    let classify = |e: &Mat3| -> Vec<bool> {
        n1.iter().zip(&n2).map(|(a, b)| sampson_unchecked(e, a.x, a.y, b.x, b.y) < thresh).collect()
    };
    let fit = |idx: &[usize]| -> Option<Mat3> {
        let a: Vec<Point2> = idx.iter().map(|&i| n1[i]).collect();
        let b: Vec<Point2> = idx.iter().map(|&i| n2[i]).collect();
        eight_point(&a, &b).map(|f| project_to_essential(&f))
    };

    let count_of = |inl: &[bool]| inl.iter().filter(|&&b| b).count();
    let classify_at = |e: &Mat3, scale: f64| -> Vec<bool> {
        n1.iter().zip(&n2).map(|(a, b)| sampson_unchecked(e, a.x, a.y, b.x, b.y) < thresh * scale).collect()
    };
    // local optimization: refit on the consensus at a loose threshold that
    // shrinks back to the real one, keep the result if it gains support
    let polish = |e: Mat3, inl: Vec<bool>| -> (Mat3, Vec<bool>, usize) {
        let mut best = (e, inl.clone(), count_of(&inl));
        let mut cur = e;
        if best.2 == n {
            return best;
        }
        for scale in [100.0, 16.0, 4.0, 1.0, 1.0] {
            let wide = classify_at(&cur, scale);
            let idx = strided((0..n).filter(|&i| wide[i]).collect(), LO_FIT_POINTS);
            let Some(e2) = fit(&idx) else { break };
            cur = e2;
            let inl2 = classify(&e2);
            let c2 = count_of(&inl2);
            if c2 > best.2 {
                best = (e2, inl2, c2);
            }
        }
        best
    };

    // spread samples over the image: eight distinct cells of a grid, one
    // match from each, which conditions the eight-point fit far better
    let buckets: Vec<Vec<usize>> = {
        let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        let cell = 0.125 * (k.width.max(k.height) as f64).max(1.0);
        for (i, p) in p1.iter().enumerate() {
            grid.entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)).or_default().push(i);
        }
        grid.into_values().collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        if buckets.len() < 8 {
            return sample(rng, n, 8).into_vec();
        }
        sample(rng, buckets.len(), 8).into_iter().map(|b| buckets[b][rng.random_range(0..buckets[b].len())]).collect()
    };
    let probe = sample(&mut rng, n, n.min(PRETEST_POINTS)).into_vec();
    let mut best: Option<(Mat3, Vec<bool>, usize)> = None;
    let mut needed = config.max_iterations;
    let mut it = 0;
    while it < needed.min(config.max_iterations) {
        it += 1;
        let pick = draw(&mut rng);
        let Some(e) = fit(&pick) else { continue };
        // cheap pre-test on a fixed random prefix before scoring everything
        if let Some(b) = &best {
            let hits = probe.iter().filter(|&&i| sampson_unchecked(&e, n1[i].x, n1[i].y, n2[i].x, n2[i].y) < thresh).count();
            if (hits as f64) < 0.5 * probe.len() as f64 * b.2 as f64 / n as f64 {
                continue;
            }
        }
        let inl = classify(&e);
        let count = count_of(&inl);
        if best.as_ref().is_none_or(|b| count > b.2) {
            let polished = polish(e, inl);
            needed = adaptive_iterations(polished.2 as f64 / n as f64, config.confidence, config.max_iterations);
            best = Some(polished);
        }
        if best.as_ref().is_some_and(|b| b.2 == n) {
            break;
        }
    }
    let (e, _, count) = best?;
    if count < 8 {
        return None;
    }
    let (e, inliers) = refine_essential(&e, &x1, &x2, &classify);
    let count = count_of(&inliers);
    if count < 8 {
        return None;
    }

    let idx: Vec<usize> = (0..n).filter(|&i| inliers[i]).collect();
    let a_in: Vec<Vec3> = idx.iter().map(|&i| x1[i]).collect();
    let b_in: Vec<Vec3> = idx.iter().map(|&i| x2[i]).collect();
    let r_rot = rotation_only(&a_in, &b_in);
    // transfer error is two-dimensional, so allow twice the epipolar threshold
    let rot_count = idx
        .iter()
        .filter(|&&i| k.project(&(r_rot * x1[i])).is_some_and(|q| (q - p2[i]).norm() < 2.0 * config.threshold_px))
        .count();
    let degenerate = rot_count as f64 >= config.rotation_only_ratio * count as f64;

    let (r, t) = if degenerate {
        (r_rot, Vec3::zeros())
    } else {
        let voters = strided((0..idx.len()).collect(), REFINE_POINTS);
        let a_v: Vec<Vec3> = voters.iter().map(|&i| a_in[i]).collect();
        let b_v: Vec<Vec3> = voters.iter().map(|&i| b_in[i]).collect();
        let (r, t, _) = decompose_essential(&e, &a_v, &b_v);
        (r, t)
    };
    let rotation = UnitQuaternion::from_matrix(&r);
    Some(RelativeEstimate { rotation, direction: t, inliers, degenerate_translation: degenerate })
}
