use super::TrackError;
use crate::geometry::Point2;

/// Tracking windows: `starts[i]` begins a window of `length` frames; windows
/// running past the video are padded with `padding[i]` empty frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSchedule {
    pub starts: Vec<u32>,
    pub length: u32,
    pub stride: u32,
    pub padding: Vec<u32>,
}

impl WindowSchedule {
    /// Real (unpadded) frames of window `i`.
    pub fn frames(&self, i: usize, num_frames: u32) -> std::ops::Range<u32> {
        let s = self.starts[i];
        s..(s + self.length).min(num_frames)
    }
}

pub fn window_schedule(num_frames: u32, fps: f64, stride_seconds: f64, length_seconds: f64) -> Result<WindowSchedule, TrackError> {
    let stride = (stride_seconds * fps).round();
    let length = (length_seconds * fps).round();
    if !(stride >= 1.0) {
        return Err(TrackError::InvalidSchedule(format!("stride {stride_seconds} s at {fps} fps is under one frame")));
    }
    if !(length >= 2.0) {
        return Err(TrackError::InvalidSchedule(format!("length {length_seconds} s at {fps} fps is under two frames")));
    }
    if stride > length {
        return Err(TrackError::InvalidSchedule(format!("stride {stride} exceeds window length {length}; frames would be skipped")));
    }
    if num_frames == 0 {
        return Err(TrackError::InvalidSchedule("video has no frames".into()));
    }
    let (stride, length) = (stride as u32, length as u32);
    let starts: Vec<u32> = (0..num_frames).step_by(stride as usize).collect();
    let padding = starts.iter().map(|&s| (s + length).saturating_sub(num_frames)).collect();
    Ok(WindowSchedule { starts, length, stride, padding })
}

/// `rows x cols` seeds at the cell centers of a uniform grid over the frame.
pub fn seed_grid(rows: u32, cols: u32, width: f64, height: f64) -> Vec<Point2> {
    let (cw, ch) = (width / cols as f64, height / rows as f64);
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Point2::new((c as f64 + 0.5) * cw, (r as f64 + 0.5) * ch)))
        .collect()
}
