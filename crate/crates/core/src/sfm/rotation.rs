use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, UnitQuaternion};

use super::{SfmError, ViewGraph};
use crate::geometry::Vec3;

/// Edges whose rotation residual exceeds this angle are down-weighted.
const HUBER_RAD: f64 = 2.0 * std::f64::consts::PI / 180.0;
const MAX_ITERATIONS: usize = 100;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Global world-to-camera rotations for the largest connected component.
///
/// Starts from the rotations chained along a maximum spanning tree (edge
/// weight = inlier count), then refines all frames jointly by iterated
/// least squares on so(3) corrections. The component's first frame is the
/// identity; frames outside the component are absent from the result.
pub fn rotation_averaging(graph: &ViewGraph) -> Result<BTreeMap<u32, UnitQuaternion<f64>>, SfmError> {
    let comp = graph.largest_component();
    if graph.edges.is_empty() || comp.len() < 2 {
        return Err(SfmError::EmptyGraph);
    }
    let index: BTreeMap<u32, usize> = comp.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let edges: Vec<_> = graph.edges.iter().filter(|e| index.contains_key(&e.i) && index.contains_key(&e.j)).collect();
    let m = comp.len();

    // maximum spanning tree
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| edges[b].inliers.cmp(&edges[a].inliers).then((edges[a].i, edges[a].j).cmp(&(edges[b].i, edges[b].j))));
    let mut parent: Vec<usize> = (0..m).collect();
    let mut tree: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for &e in &order {
        let (a, b) = (index[&edges[e].i], index[&edges[e].j]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            tree[a].push((b, e));
            tree[b].push((a, e));
        }
    }
    let mut rot: Vec<Option<UnitQuaternion<f64>>> = vec![None; m];
    rot[0] = Some(UnitQuaternion::identity());
    let mut queue = vec![0usize];
    while let Some(a) = queue.pop() {
        let ra = rot[a].unwrap();
        for &(b, e) in &tree[a] {
            if rot[b].is_some() {
                continue;
            }
            let edge = edges[e];
            // R_j = R_ij R_i
            rot[b] = Some(if index[&edge.i] == a { edge.rotation * ra } else { edge.rotation.inverse() * ra });
            queue.push(b);
        }
    }
    let mut rot: Vec<UnitQuaternion<f64>> = rot.into_iter().map(|r| r.expect("tree spans the component")).collect();

    // refinement: omega_j - R_ij omega_i = log(R_ij R_i R_j^T), frame 0 fixed
    let n = 3 * (m - 1);
    for _ in 0..MAX_ITERATIONS {
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);
        for edge in &edges {
            let (a, b) = (index[&edge.i], index[&edge.j]);
            let d = edge.rotation * rot[a] * rot[b].inverse();
            let e = d.scaled_axis();
            let w = if e.norm() <= HUBER_RAD { 1.0 } else { HUBER_RAD / e.norm() };
            let rij = edge.rotation.to_rotation_matrix().into_inner();
            // residual r = omega_b - R_ij omega_a - e; blocks J_b = I, J_a = -R_ij
            let blocks = [(a, -rij), (b, nalgebra::Matrix3::identity())];
            for (x, jx) in &blocks {
                if *x == 0 {
                    continue;
                }
                let ox = 3 * (x - 1);
                let gx = jx.transpose() * e * w;
                for r in 0..3 {
                    g[ox + r] += gx[r];
                }
                for (y, jy) in &blocks {
                    if *y == 0 {
                        continue;
                    }
                    let oy = 3 * (y - 1);
                    let hxy = jx.transpose() * jy * w;
                    for r in 0..3 {
                        for c in 0..3 {
                            h[(ox + r, oy + c)] += hxy[(r, c)];
                        }
                    }
                }
            }
        }
        let Some(chol) = h.cholesky() else { break };
        let delta = chol.solve(&g);
        for x in 1..m {
            let w = Vec3::new(delta[3 * (x - 1)], delta[3 * (x - 1) + 1], delta[3 * (x - 1) + 2]);
            rot[x] = UnitQuaternion::from_scaled_axis(w) * rot[x];
        }
        if delta.amax() < 1e-14 {
            break;
        }
    }
    Ok(comp.into_iter().zip(rot).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfm::ViewEdge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn edge(i: u32, j: u32, r: UnitQuaternion<f64>) -> ViewEdge {
        ViewEdge { i, j, rotation: r, direction: Vec3::x(), inliers: 50, matches: 50, degenerate_translation: false }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
    }

    #[test]
    fn chain_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt: Vec<_> = (0..3).map(|_| random_rotation(&mut rng)).collect();
        let rel = |i: usize, j: usize| gt[j] * gt[i].inverse();
        let g = ViewGraph { nodes: vec![0, 1, 2], edges: vec![edge(0, 1, rel(0, 1)), edge(1, 2, rel(1, 2))] };
        let r = rotation_averaging(&g).unwrap();
        for i in 0..3 {
            // gauge: frame 0 is the identity
            let expected = gt[i] * gt[0].inverse();
            assert!(r[&(i as u32)].angle_to(&expected) < 1e-12);
        }
    }

    #[test]
    fn noisy_dense_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt: Vec<_> = (0..20).map(|_| random_rotation(&mut rng)).collect();
        let mut edges = Vec::new();
        for i in 0..20u32 {
            for j in i + 1..20u32 {
                if rng.random_bool(0.4) || j == i + 1 {
                    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
                    let noise = UnitQuaternion::from_scaled_axis(axis * 0.5f64.to_radians());
                    edges.push(edge(i, j, noise * gt[j as usize] * gt[i as usize].inverse()));
                }
            }
        }
        let g = ViewGraph { nodes: (0..20).collect(), edges };
        let r = rotation_averaging(&g).unwrap();
        // compare after the best global alignment to ground truth (one
        // rotation fitted by chaining through frame 0 is not optimal; use the
        // mean of per-frame differences as the alignment)
        let diffs: Vec<_> = (0..20).map(|i| gt[i].inverse() * r[&(i as u32)]).collect();
        let mut align = diffs[0];
        for _ in 0..10 {
            let mean: Vec3 = diffs.iter().map(|d| (align.inverse() * d).scaled_axis()).sum::<Vec3>() / 20.0;
            align *= UnitQuaternion::from_scaled_axis(mean);
        }
        let err: f64 = (0..20).map(|i| (gt[i] * align).angle_to(&r[&(i as u32)]).to_degrees()).sum::<f64>() / 20.0;
        assert!(err < 0.5, "mean error {err} deg");
        // regression value for this seed
        assert!((err - FROZEN_MEAN_ERROR_DEG).abs() < 1e-9, "mean error {err} deg");
    }
    const FROZEN_MEAN_ERROR_DEG: f64 = 0.120_345_564_771;

    #[test]
    fn disconnected_keeps_largest() {
        let q = UnitQuaternion::from_scaled_axis(Vec3::new(0.1, 0.0, 0.0));
        let g = ViewGraph { nodes: (0..6).collect(), edges: vec![edge(0, 1, q), edge(2, 3, q), edge(3, 4, q)] };
        let r = rotation_averaging(&g).unwrap();
        assert_eq!(r.keys().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(r[&2].angle() < 1e-15);
    }

    #[test]
    fn empty_graph() {
        assert_eq!(rotation_averaging(&ViewGraph::default()), Err(SfmError::EmptyGraph));
    }
}
