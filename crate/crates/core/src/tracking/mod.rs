//! Sliding-window tracklets, mask-aware pairwise correspondences, and the
//! track statistics used by the tracking filter.

mod correspond;
mod schedule;
mod stats;

pub(crate) use correspond::static_observations;
pub use correspond::{extract_correspondences, tracklets_from_correspondences, Correspondence, CorrespondenceSet, ExtractOptions};
pub use schedule::{seed_grid, window_schedule, WindowSchedule};
pub use stats::{track_statistics, TrackStatistics};

use crate::geometry::Point2;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("invalid window schedule: {0}")]
    InvalidSchedule(String),
    #[error("tracklet {id}: {reason}")]
    InvalidTracklet { id: u64, reason: String },
}

/// One seeded point followed across consecutive frames from `start_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub start_frame: u32,
    pub points: Vec<Point2>,
    pub visible: Vec<bool>,
}

impl Tracklet {
    pub fn validate(&self) -> Result<(), TrackError> {
        if self.points.is_empty() {
            return Err(TrackError::InvalidTracklet { id: self.id, reason: "no points".into() });
        }
        if self.points.len() != self.visible.len() {
            return Err(TrackError::InvalidTracklet {
                id: self.id,
                reason: format!("{} points but {} visibility flags", self.points.len(), self.visible.len()),
            });
        }
        Ok(())
    }

    /// Last covered frame (inclusive).
    pub fn end_frame(&self) -> u32 {
        self.start_frame + self.points.len() as u32 - 1
    }

    /// `(frame, point)` for every visible observation.
    pub fn observations(&self) -> impl Iterator<Item = (u32, Point2)> + '_ {
        self.points
            .iter()
            .zip(&self.visible)
            .enumerate()
            .filter(|(_, (_, &v))| v)
            .map(move |(k, (p, _))| (self.start_frame + k as u32, *p))
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn at(&self, frame: u32) -> Option<(Point2, bool)> {
        let k = frame.checked_sub(self.start_frame)? as usize;
        self.points.get(k).map(|p| (*p, self.visible[k]))
    }
}
