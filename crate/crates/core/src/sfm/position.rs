use std::collections::BTreeMap;

use nalgebra::{DMatrix, UnitQuaternion};

use super::{SfmError, ViewGraph};
use crate::geometry::{skew, Vec3};

/// Camera centers with the scale fixed by a unit mean baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSolution {
    pub centers: BTreeMap<u32, Vec3>,
    /// All directions were parallel; centers were spread evenly along the
    /// common axis in frame order.
    pub collinear: bool,
    /// Edges whose directions could not constrain lateral placement, or were
    /// excluded as pure rotation.
    pub flagged_edges: Vec<(u32, u32)>,
}

/// Directions within this angle of a common axis count as collinear motion.
const PARALLEL_RAD: f64 = 0.0175;
const REWEIGHT_ROUNDS: usize = 5;
/// Scale of the Cauchy weight on direction disagreement.
const ROBUST_RAD: f64 = 0.05;

/// Smallest eigenvector of the stacked cross-product constraints
/// `d_ij x (c_j - c_i) = 0` and equality constraints `c_j = c_i`, with the
/// first center pinned at the origin. Returns the vector and the ratio of the
/// second-smallest to the largest eigenvalue.
fn solve(m: usize, constraints: &[(usize, usize, Option<Vec3>, f64)]) -> (Vec<Vec3>, f64) {
    let n = 3 * (m - 1);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for &(a, b, dir, w) in constraints {
        let block = match dir {
            Some(d) => {
                let s = skew(&d);
                s.transpose() * s
            }
            None => nalgebra::Matrix3::identity(),
        } * w;
        // residual = B (c_b - c_a)
        for (x, sx) in [(a, -1.0), (b, 1.0)] {
            if x == 0 {
                continue;
            }
            for (y, sy) in [(a, -1.0), (b, 1.0)] {
                if y == 0 {
                    continue;
                }
                let (ox, oy) = (3 * (x - 1), 3 * (y - 1));
                for r in 0..3 {
                    for c in 0..3 {
                        h[(ox + r, oy + c)] += sx * sy * block[(r, c)];
                    }
                }
            }
        }
    }
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let max = eig.eigenvalues[order[n - 1]].max(f64::MIN_POSITIVE);
    let gap = if n > 1 { eig.eigenvalues[order[1]] / max } else { 1.0 };
    let v = eig.eigenvectors.column(order[0]);
    let mut centers = vec![Vec3::zeros()];
    centers.extend((1..m).map(|x| Vec3::new(v[3 * (x - 1)], v[3 * (x - 1) + 1], v[3 * (x - 1) + 2])));
    (centers, gap)
}

/// Recovers camera centers from edge translation directions and global
/// rotations. Edges flagged as pure rotation contribute `c_i = c_j` instead
/// of a direction.
pub fn position_averaging(graph: &ViewGraph, rotations: &BTreeMap<u32, UnitQuaternion<f64>>) -> Result<PositionSolution, SfmError> {
    let frames: Vec<u32> = rotations.keys().copied().collect();
    if frames.len() == 1 {
        return Ok(PositionSolution { centers: [(frames[0], Vec3::zeros())].into(), collinear: false, flagged_edges: Vec::new() });
    }
    if frames.is_empty() {
        return Err(SfmError::EmptyGraph);
    }
    let index: BTreeMap<u32, usize> = frames.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let mut flagged = Vec::new();
    // (a, b, world direction from c_a to c_b, weight)
    let mut cons: Vec<(usize, usize, Option<Vec3>, f64)> = Vec::new();
    // frames with at least one usable direction
    let mut directed = vec![false; frames.len()];
    for e in graph.edges.iter().filter(|e| !e.degenerate_translation) {
        if let (Some(&a), Some(&b)) = (index.get(&e.i), index.get(&e.j)) {
            directed[a] = true;
            directed[b] = true;
        }
    }
    for e in &graph.edges {
        let (Some(&a), Some(&b)) = (index.get(&e.i), index.get(&e.j)) else { continue };
        if e.degenerate_translation {
            flagged.push((e.i, e.j));
            // directions are dropped; a frame reached only this way sits on its partner
            if !directed[a] || !directed[b] {
                cons.push((a, b, None, 1.0));
            }
        } else {
            // t_ij = R_j (c_i - c_j), so c_j - c_i points along -R_j^T t_ij
            let d = -(rotations[&e.j].inverse() * e.direction).normalize();
            cons.push((a, b, Some(d), 1.0));
        }
    }
    let dirs: Vec<Vec3> = cons.iter().filter_map(|c| c.2).collect();
    if dirs.is_empty() {
        return Err(SfmError::InsufficientParallax);
    }
    let m = frames.len();

    let collinear = dirs.iter().all(|d| d.cross(&dirs[0]).norm() < PARALLEL_RAD);
    let centers = if collinear {
        // directions fix only the axis; spread frames evenly along it
        let axis: Vec3 = dirs.iter().map(|d| if d.dot(&dirs[0]) >= 0.0 { *d } else { -d }).sum::<Vec3>().normalize();
        flagged.extend(graph.edges.iter().filter(|e| !e.degenerate_translation && index.contains_key(&e.i) && index.contains_key(&e.j)).map(|e| (e.i, e.j)));
        let sign = if cons.iter().filter_map(|c| c.2.map(|d| d.dot(&axis) * (c.1 as f64 - c.0 as f64))).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
        frames.iter().map(|&f| axis * sign * (f - frames[0]) as f64).collect::<Vec<_>>()
    } else {
        let (mut centers, gap) = solve(m, &cons);
        if gap < 1e-9 {
            return Err(SfmError::InsufficientParallax);
        }
        // Reweight towards the angular residual |d x (c_b - c_a)| / |c_b - c_a|,
        // with a Cauchy factor that suppresses inconsistent directions.
        for _ in 0..REWEIGHT_ROUNDS {
            let scale = centers.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let agree: f64 = cons.iter().filter_map(|c| c.2.map(|d| d.dot(&(centers[c.1] - centers[c.0])))).sum();
            let sign = if agree < 0.0 { -1.0 } else { 1.0 };
            for c in cons.iter_mut() {
                let Some(d) = c.2 else { continue };
                let v = (centers[c.1] - centers[c.0]) * sign;
                let len = v.norm() / scale;
                let angle = if v.norm() > 0.0 { d.dot(&v.normalize()).clamp(-1.0, 1.0).acos() } else { 0.0 };
                c.3 = 1.0 / len.max(1e-3).powi(2) / (1.0 + (angle / ROBUST_RAD).powi(2));
            }
            centers = solve(m, &cons).0;
        }
        let agree: f64 = cons.iter().filter_map(|c| c.2.map(|d| d.dot(&(centers[c.1] - centers[c.0])))).sum();
        if agree < 0.0 {
            centers.iter_mut().for_each(|c| *c = -*c);
        }
        centers
    };

    let baselines: Vec<f64> = cons.iter().filter(|c| c.2.is_some()).map(|c| (centers[c.1] - centers[c.0]).norm()).collect();
    let mean = baselines.iter().sum::<f64>() / baselines.len() as f64;
    if !(mean > 0.0) {
        return Err(SfmError::InsufficientParallax);
    }
    flagged.sort_unstable();
    flagged.dedup();
    Ok(PositionSolution {
        centers: frames.iter().zip(centers).map(|(&f, c)| (f, c / mean)).collect(),
        collinear,
        flagged_edges: flagged,
    })
}
