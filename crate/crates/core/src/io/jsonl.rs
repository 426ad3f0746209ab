use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::eval::AnnotatedPair;
use crate::filtering::{FilterSignals, LabeledVideo};
use crate::geometry::{CameraIntrinsics, Point2};
use crate::tracking::Tracklet;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackletLine {
    id: u64,
    start_frame: u32,
    /// `null` coordinates stand for non-finite values of occluded points.
    points: Vec<[Option<f64>; 2]>,
    visible: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    video: String,
    frame_a: u32,
    frame_b: u32,
    xa: f64,
    ya: f64,
    xb: f64,
    yb: f64,
}

fn json_error(line: usize, e: serde_json::Error) -> FormatError {
    FormatError::line(line, format!("column {}: {e}", e.column()))
}

fn write_lines<T: Serialize>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("plain data always serializes"));
        out.push('\n');
    }
    out
}

fn read_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).map(|v| (k + 1, v)).map_err(|e| json_error(k + 1, e)))
        .collect()
}

/// One JSON object per line: `id`, `start_frame`, `points` as `[x, y]`
/// pairs and `visible` flags.
pub fn write_tracklets(tracklets: &[Tracklet]) -> String {
    let finite = |x: f64| x.is_finite().then_some(x);
    write_lines(tracklets.iter().map(|t| TrackletLine {
        id: t.id,
        start_frame: t.start_frame,
        points: t.points.iter().map(|p| [finite(p.x), finite(p.y)]).collect(),
        visible: t.visible.clone(),
    }))
}

pub fn read_tracklets(text: &str) -> Result<Vec<Tracklet>, FormatError> {
    read_lines::<TrackletLine>(text)?
        .into_iter()
        .map(|(line, t)| {
            let points = t.points.iter().map(|[x, y]| Point2::new(x.unwrap_or(f64::NAN), y.unwrap_or(f64::NAN))).collect();
            let tracklet = Tracklet { id: t.id, start_frame: t.start_frame, points, visible: t.visible };
            tracklet.validate().map_err(|e| FormatError::line(line, e.to_string()))?;
            if tracklet.observations().any(|(_, p)| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(FormatError::line(line, format!("tracklet {}: visible point without coordinates", tracklet.id)));
            }
            Ok(tracklet)
        })
        .collect()
}

/// One JSON object per line: `video`, `frame_a`, `frame_b`, `xa`, `ya`, `xb`, `yb`.
pub fn write_pairs(pairs: &[AnnotatedPair]) -> String {
    write_lines(pairs.iter().map(|p| PairLine {
        video: p.video.clone(),
        frame_a: p.frame_a,
        frame_b: p.frame_b,
        xa: p.point_a.x,
        ya: p.point_a.y,
        xb: p.point_b.x,
        yb: p.point_b.y,
    }))
}

pub fn read_pairs(text: &str) -> Result<Vec<AnnotatedPair>, FormatError> {
    Ok(read_lines::<PairLine>(text)?
        .into_iter()
        .map(|(_, p)| AnnotatedPair {
            video: p.video,
            frame_a: p.frame_a,
            frame_b: p.frame_b,
            point_a: Point2::new(p.xa, p.ya),
            point_b: Point2::new(p.xb, p.yb),
        })
        .collect())
}

/// Signals of one video as a pretty-printed JSON object.
pub fn write_signals(signals: &FilterSignals) -> String {
    let mut s = serde_json::to_string_pretty(signals).expect("plain data always serializes");
    s.push('\n');
    s
}

pub fn read_signals(text: &str) -> Result<FilterSignals, FormatError> {
    let s: FilterSignals = serde_json::from_str(text).map_err(|e| json_error(e.line(), e))?;
    s.validate().map_err(|e| FormatError::line(0, format!("{}: {e}", s.id)))?;
    Ok(s)
}

/// One `{"id", "suitable"}` object per line.
pub fn write_labels(labels: &[LabeledVideo]) -> String {
    write_lines(labels.iter())
}

pub fn read_labels(text: &str) -> Result<Vec<LabeledVideo>, FormatError> {
    Ok(read_lines(text)?.into_iter().map(|(_, l)| l).collect())
}

/// Pinhole intrinsics as a JSON object with `fx`, `fy`, `cx`, `cy`, `width`, `height`.
pub fn write_intrinsics(k: &CameraIntrinsics) -> String {
    let f = IntrinsicsFile { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height };
    serde_json::to_string_pretty(&f).expect("plain data always serializes") + "\n"
}

pub fn read_intrinsics(text: &str) -> Result<CameraIntrinsics, FormatError> {
    let f: IntrinsicsFile = serde_json::from_str(text).map_err(|e| json_error(e.line(), e))?;
    CameraIntrinsics::new(f.fx, f.fy, f.cx, f.cy, f.width, f.height).map_err(|e| FormatError::line(0, e.to_string()))
}
