use std::collections::{BTreeMap, HashSet};

use log::warn;
use rayon::prelude::*;

use super::Tracklet;
use crate::geometry::Point2;
use crate::masking::DynamicMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub tracklet: u64,
    pub p_i: Point2,
    pub p_j: Point2,
}

/// Matches per frame pair `(i, j)`, `i < j`, ordered by tracklet id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: BTreeMap<(u32, u32), Vec<Correspondence>>,
}

impl CorrespondenceSet {
    pub fn total(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    pub fn get(&self, i: u32, j: u32) -> &[Correspondence] {
        self.pairs.get(&(i, j)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Frames appearing in any pair.
    pub fn frames(&self) -> Vec<u32> {
        let mut f: Vec<u32> = self.pairs.keys().flat_map(|&(i, j)| [i, j]).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn insert(&mut self, i: u32, j: u32, c: Correspondence) {
        assert!(i < j, "frame pair must be ordered");
        self.pairs.entry((i, j)).or_default().push(c);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractOptions {
    /// Drop matches whose rounded endpoints repeat an earlier match at the same frame pair.
    pub dedup: bool,
    /// Frames at or beyond this index are padding and never produce matches.
    pub num_frames: Option<u32>,
}

/// Visible observations before `limit` that no mask covers.
pub(crate) fn static_observations(t: &Tracklet, masks: &BTreeMap<u32, DynamicMask>, limit: u32) -> Vec<(u32, Point2)> {
    t.observations()
        .filter(|(f, p)| *f < limit && !masks.get(f).is_some_and(|m| m.contains_point(p.x, p.y)))
        .collect()
}

/// Emits, for every tracklet, each frame pair at which it is visible and
/// outside the dynamic mask at both frames. Frames without a mask count as
/// fully static.
pub fn extract_correspondences(
    tracklets: &[Tracklet],
    masks: &BTreeMap<u32, DynamicMask>,
    options: &ExtractOptions,
) -> CorrespondenceSet {
    let limit = options.num_frames.unwrap_or(u32::MAX);
    let mut missing: Vec<u32> = tracklets
        .iter()
        .flat_map(|t| t.observations().map(|(f, _)| f))
        .filter(|f| *f < limit && !masks.contains_key(f))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if !masks.is_empty() && !missing.is_empty() {
        warn!("{} tracked frames have no mask; treating them as static", missing.len());
    }

    let per_tracklet: Vec<Vec<(u32, u32, Correspondence)>> = tracklets
        .par_iter()
        .map(|t| {
            let clean = static_observations(t, masks, limit);
            let mut out = Vec::with_capacity(clean.len() * clean.len().saturating_sub(1) / 2);
            for (a, &(fi, pi)) in clean.iter().enumerate() {
                for &(fj, pj) in &clean[a + 1..] {
                    out.push((fi, fj, Correspondence { tracklet: t.id, p_i: pi, p_j: pj }));
                }
            }
            out
        })
        .collect();

    let mut set = CorrespondenceSet::default();
    for (i, j, c) in per_tracklet.into_iter().flatten() {
        set.insert(i, j, c);
    }
    for matches in set.pairs.values_mut() {
        matches.sort_by_key(|c| c.tracklet);
        if options.dedup {
            let mut seen = HashSet::new();
            matches.retain(|c| {
                let key = (c.p_i.x.round() as i64, c.p_i.y.round() as i64, c.p_j.x.round() as i64, c.p_j.y.round() as i64);
                seen.insert(key)
            });
        }
    }
    set.pairs.retain(|_, m| !m.is_empty());
    set
}

/// Rebuilds one tracklet per id from its matches. Frames between the
/// observed ones are marked invisible; conflicting positions for the same
/// frame keep the first one seen.
pub fn tracklets_from_correspondences(set: &CorrespondenceSet) -> Vec<Tracklet> {
    let mut obs: BTreeMap<u64, BTreeMap<u32, Point2>> = BTreeMap::new();
    for (&(i, j), cs) in &set.pairs {
        for c in cs {
            let t = obs.entry(c.tracklet).or_default();
            t.entry(i).or_insert(c.p_i);
            t.entry(j).or_insert(c.p_j);
        }
    }
    obs.into_iter()
        .map(|(id, frames)| {
            let first = *frames.keys().next().expect("a match has two frames");
            let last = *frames.keys().next_back().expect("a match has two frames");
            let (points, visible) = (first..=last)
                .map(|f| frames.get(&f).map_or((Point2::new(f64::NAN, f64::NAN), false), |p| (*p, true)))
                .unzip();
            Tracklet { id, start_frame: first, points, visible }
        })
        .collect()
}
