use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_fundamental_ransac, DynamicMask, FlowField, MaskError, RansacConfig};
use crate::geometry::epipolar::sampson_unchecked;
use crate::geometry::{Mat3, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Pixels are masked when the Sampson error exceeds `width * height / threshold_divisor`.
    pub threshold_divisor: f64,
    /// Grid step, in pixels, for sampling flow correspondences for the fit.
    pub sample_stride: u32,
    pub ransac: RansacConfig,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { threshold_divisor: 8100.0, sample_stride: 8, ransac: RansacConfig::default() }
    }
}

/// Squared-pixel Sampson threshold for a frame size.
pub fn motion_threshold(width: u32, height: u32, divisor: f64) -> f64 {
    width as f64 * height as f64 / divisor
}

fn fit(flow: &FlowField, config: &MotionConfig, seed: u64) -> Result<Mat3, MaskError> {
    let step = config.sample_stride.max(1) as usize;
    let mut matches = Vec::new();
    for y in (0..flow.height).step_by(step) {
        for x in (0..flow.width).step_by(step) {
            let [u, v] = flow.at(x, y);
            if u.is_finite() && v.is_finite() {
                matches.push((Point2::new(x as f64, y as f64), Point2::new(x as f64 + u as f64, y as f64 + v as f64)));
            }
        }
    }
    Ok(estimate_fundamental_ransac(&matches, &config.ransac, seed)?.f.0)
}

fn dense_error(flow: &FlowField, f: &Mat3) -> Vec<f64> {
    let w = flow.width as usize;
    flow.data
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            sampson_unchecked(f, x, y, x + d[0] as f64, y + d[1] as f64)
        })
        .collect()
}

/// Masks pixels whose flow disagrees with the dominant epipolar geometry.
///
/// A fundamental matrix is fit to each flow direction; the per-pixel error is
/// the larger of the forward and backward Sampson errors.
pub fn motion_segment(fwd: &FlowField, bwd: &FlowField, config: &MotionConfig, seed: u64) -> Result<DynamicMask, MaskError> {
    if (fwd.width, fwd.height) != (bwd.width, bwd.height) {
        return Err(MaskError::DimensionMismatch { expected: (fwd.width, fwd.height), got: (bwd.width, bwd.height) });
    }
    let f_fwd = fit(fwd, config, seed)?;
    let f_bwd = fit(bwd, config, seed.wrapping_add(1))?;
    let thresh = motion_threshold(fwd.width, fwd.height, config.threshold_divisor);
    let e_fwd = dense_error(fwd, &f_fwd);
    let e_bwd = dense_error(bwd, &f_bwd);
    let bits = e_fwd.iter().zip(&e_bwd).map(|(a, b)| a.max(*b) > thresh).collect();
    Ok(DynamicMask { frame_index: fwd.frame, width: fwd.width, height: fwd.height, bits })
}

/// Seed for one frame pair, derived from the video seed.
pub(crate) fn pair_seed(video_seed: u64, frame: u32) -> u64 {
    // splitmix64 finalizer
    let mut z = video_seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Segments every frame pair in parallel. Pairs without consensus yield an
/// empty mask and a warning.
pub fn segment_sequence(pairs: &[(FlowField, FlowField)], config: &MotionConfig, video_seed: u64) -> Result<Vec<DynamicMask>, MaskError> {
    pairs
        .par_iter()
        .map(|(fwd, bwd)| match motion_segment(fwd, bwd, config, pair_seed(video_seed, fwd.frame)) {
            Ok(m) => Ok(m),
            Err(e @ MaskError::NoConsensus { .. }) | Err(e @ MaskError::TooFewMatches(_)) => {
                warn!("frame {}: motion segmentation skipped ({e})", fwd.frame);
                Ok(DynamicMask::empty(fwd.frame, fwd.width, fwd.height))
            }
            Err(e) => Err(e),
        })
        .collect()
}
