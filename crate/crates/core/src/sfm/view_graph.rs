use std::collections::{BTreeMap, BTreeSet};

use nalgebra::UnitQuaternion;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::essential::{estimate_relative_pose, EssentialConfig};
use super::SfmError;
use crate::geometry::{CameraIntrinsics, Point2, Vec3};
use crate::masking::pair_seed;
use crate::tracking::CorrespondenceSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewGraphConfig {
    pub min_matches: usize,
    pub essential: EssentialConfig,
}

impl Default for ViewGraphConfig {
    fn default() -> Self {
        Self { min_matches: 30, essential: EssentialConfig::default() }
    }
}

/// Relative pose from frame `i` to frame `j` (`i < j`): `x_j = rotation * x_i + t`
/// with `t` along `direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEdge {
    pub i: u32,
    pub j: u32,
    pub rotation: UnitQuaternion<f64>,
    pub direction: Vec3,
    pub inliers: usize,
    pub matches: usize,
    pub degenerate_translation: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewGraph {
    pub nodes: Vec<u32>,
    pub edges: Vec<ViewEdge>,
}

impl ViewGraph {
    /// Nodes of the largest connected component, ties going to the component
    /// with the smallest frame.
    pub fn largest_component(&self) -> Vec<u32> {
        let mut adj: BTreeMap<u32, Vec<u32>> = self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for e in &self.edges {
            adj.entry(e.i).or_default().push(e.j);
            adj.entry(e.j).or_default().push(e.i);
        }
        let mut seen = BTreeSet::new();
        let mut best: Vec<u32> = Vec::new();
        for &start in adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = vec![start];
            seen.insert(start);
            let mut k = 0;
            while k < comp.len() {
                for &m in &adj[&comp[k]] {
                    if seen.insert(m) {
                        comp.push(m);
                    }
                }
                k += 1;
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Estimates an edge for every frame pair with enough matches. Pairs are
/// processed in parallel with per-pair seeds; edge order follows `(i, j)`.
pub fn build_view_graph(corr: &CorrespondenceSet, k: &CameraIntrinsics, config: &ViewGraphConfig, seed: u64) -> Result<ViewGraph, SfmError> {
    let pairs: Vec<(&(u32, u32), &Vec<_>)> = corr.pairs.iter().filter(|(_, m)| m.len() >= config.min_matches.max(8)).collect();
    let edges: Vec<ViewEdge> = pairs
        .par_iter()
        .filter_map(|(&(i, j), matches)| {
            let p1: Vec<Point2> = matches.iter().map(|c| c.p_i).collect();
            let p2: Vec<Point2> = matches.iter().map(|c| c.p_j).collect();
            let pair = pair_seed(seed, i).wrapping_add(j as u64);
            let est = estimate_relative_pose(k, &p1, &p2, &config.essential, pair)?;
            let inliers = est.inlier_count();
            (inliers >= config.min_matches).then(|| ViewEdge {
                i,
                j,
                rotation: est.rotation,
                direction: est.direction,
                inliers,
                matches: matches.len(),
                degenerate_translation: est.degenerate_translation,
            })
        })
        .collect();
    if edges.is_empty() {
        return Err(SfmError::EmptyGraph);
    }
    Ok(ViewGraph { nodes: corr.frames(), edges })
}
