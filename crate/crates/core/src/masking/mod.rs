//! Dynamic-region masks: semantic class and hand-interaction filters,
//! flow-based motion segmentation, mask union, and keyframe propagation.

mod mask;
mod motion;
mod ransac;
mod semantic;

pub use mask::{hold_propagate, propagate_keyframes, union_masks, DynamicMask, FlowField, LabelMap};
pub use motion::{motion_segment, motion_threshold, segment_sequence, MotionConfig};
pub(crate) use motion::pair_seed;
pub use ransac::{eight_point, estimate_fundamental_ransac, FundamentalEstimate, RansacConfig};
pub use semantic::{interaction_touch_filter, is_dynamic_class, is_held_touch_class, semantic_class_filter};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("need at least 8 matches, got {0}")]
    TooFewMatches(usize),
    #[error("no consensus: best inlier ratio {ratio:.3} below {min:.3}")]
    NoConsensus { ratio: f64, min: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
}
