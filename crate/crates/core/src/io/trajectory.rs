use std::fmt::Write;

use super::{parse_f64, FormatError};
use crate::geometry::{CameraIntrinsics, Pose, Trajectory, Vec3};
use crate::sfm::SceneModel;

/// Frame rate assumed when a trajectory file has no `# fps` line.
const DEFAULT_FPS: f64 = 12.0;

/// TUM-style text: `frame tx ty tz qx qy qz qw` per registered frame, where
/// the pose is camera-to-world (the camera center and its orientation).
/// Unregistered frames are listed in a `# unregistered` comment so that the
/// frame set survives the round trip.
pub fn write_tum(traj: &Trajectory) -> String {
    let mut out = String::new();
    writeln!(out, "# fps {:?}", traj.fps).unwrap();
    write_rows(&mut out, traj);
    out
}

/// Reconstruction summary carried in the comment header of a scene trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHeader {
    pub intrinsics: CameraIntrinsics,
    pub mean_reprojection_error: f64,
    pub registered_fraction: f64,
}

/// [`write_tum`] with the intrinsics, mean reprojection error and registered
/// fraction of the model in the header. [`read_tum`] skips these lines;
/// [`read_scene_header`] recovers them.
pub fn write_scene_tum(model: &SceneModel) -> String {
    let k = &model.intrinsics;
    let mut out = String::new();
    writeln!(out, "# fps {:?}", model.trajectory.fps).unwrap();
    writeln!(out, "# intrinsics {:?} {:?} {:?} {:?} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height).unwrap();
    writeln!(out, "# mean_reprojection_error_px {:?}", model.mean_reprojection_error).unwrap();
    writeln!(out, "# registered_fraction {:?}", model.registered_fraction()).unwrap();
    write_rows(&mut out, &model.trajectory);
    out
}

/// The scene header of a trajectory file, `None` when it has none.
pub fn read_scene_header(text: &str) -> Result<Option<SceneHeader>, FormatError> {
    let (mut k, mut err, mut frac) = (None, None, None);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(comment) = raw.trim().strip_prefix('#') else { continue };
        let words: Vec<&str> = comment.split_whitespace().collect();
        match words.as_slice() {
            ["intrinsics", fx, fy, cx, cy, w, h] => {
                let dim = |s: &str| s.parse::<u32>().map_err(|_| FormatError::line(line, format!("bad image size {s:?}")));
                let intrinsics = CameraIntrinsics {
                    fx: parse_f64(fx, line, "fx")?,
                    fy: parse_f64(fy, line, "fy")?,
                    cx: parse_f64(cx, line, "cx")?,
                    cy: parse_f64(cy, line, "cy")?,
                    width: dim(w)?,
                    height: dim(h)?,
                };
                intrinsics.validate().map_err(|e| FormatError::line(line, e.to_string()))?;
                k = Some(intrinsics);
            }
            ["intrinsics", ..] => return Err(FormatError::line(line, "intrinsics needs fx fy cx cy width height")),
            ["mean_reprojection_error_px", v] => err = Some(parse_f64(v, line, "mean reprojection error")?),
            ["registered_fraction", v] => frac = Some(parse_f64(v, line, "registered fraction")?),
            _ => {}
        }
    }
    Ok(match (k, err, frac) {
        (Some(intrinsics), Some(mean_reprojection_error), Some(registered_fraction)) => {
            Some(SceneHeader { intrinsics, mean_reprojection_error, registered_fraction })
        }
        (None, None, None) => None,
        _ => return Err(FormatError::line(0, "incomplete scene header")),
    })
}

fn write_rows(out: &mut String, traj: &Trajectory) {
    writeln!(out, "# frame tx ty tz qx qy qz qw").unwrap();
    let missing: Vec<String> = traj.frames.iter().filter(|(_, p)| p.is_none()).map(|(f, _)| f.to_string()).collect();
    if !missing.is_empty() {
        writeln!(out, "# unregistered {}", missing.join(" ")).unwrap();
    }
    for (f, pose) in traj.registered() {
        let c = pose.center();
        let [qx, qy, qz, qw] = pose.inverse().quaternion_xyzw();
        writeln!(out, "{f} {:?} {:?} {:?} {qx:?} {qy:?} {qz:?} {qw:?}", c.x, c.y, c.z).unwrap();
    }
}

pub fn read_tum(text: &str) -> Result<Trajectory, FormatError> {
    let mut fps = DEFAULT_FPS;
    let mut frames: Vec<(u32, Option<Pose>)> = Vec::new();
    let mut missing: Vec<(u32, usize)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            match words.next() {
                Some("fps") => {
                    let v = words.next().ok_or_else(|| FormatError::line(line, "fps line without a value"))?;
                    fps = parse_f64(v, line, "fps")?;
                    if !(fps > 0.0) {
                        return Err(FormatError::line(line, format!("fps must be positive, got {fps}")));
                    }
                }
                Some("unregistered") => {
                    for w in words {
                        let f = w.parse().map_err(|_| FormatError::line(line, format!("bad frame index {w:?}")))?;
                        missing.push((f, line));
                    }
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(FormatError::line(line, format!("expected 8 fields, found {}", fields.len())));
        }
        let f: u32 = fields[0].parse().map_err(|_| FormatError::line(line, format!("bad frame index {:?}", fields[0])))?;
        let mut v = [0.0; 7];
        for (slot, field) in v.iter_mut().zip(&fields[1..]) {
            *slot = parse_f64(field, line, "pose")?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::line(line, "non-finite pose value"));
        }
        let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(FormatError::line(line, format!("quaternion norm {norm} is not 1")));
        }
        if frames.last().is_some_and(|(g, _)| *g >= f) {
            return Err(FormatError::line(line, format!("frame {f} is not after the previous frame")));
        }
        let cam_to_world = Pose::from_xyzw(Vec3::new(v[0], v[1], v[2]), [v[3], v[4], v[5], v[6]]);
        let rotation = cam_to_world.rotation.inverse();
        frames.push((f, Some(Pose::from_center(rotation, &cam_to_world.translation))));
    }
    for (f, line) in missing {
        match frames.binary_search_by_key(&f, |(g, _)| *g) {
            Ok(_) => return Err(FormatError::line(line, format!("frame {f} is both registered and unregistered"))),
            Err(i) => frames.insert(i, (f, None)),
        }
    }
    Trajectory::new(frames, fps).map_err(|e| FormatError::line(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn sample() -> Trajectory {
        let p = |a: f64, c: [f64; 3]| Some(Pose::from_center(UnitQuaternion::from_euler_angles(a, -0.5 * a, 0.3), &Vec3::from(c)));
        Trajectory::new(vec![(0, p(0.1, [1.0, 2.0, 3.0])), (1, None), (2, p(-0.7, [0.0, -1.5, 1e-7])), (5, None)], 30.0).unwrap()
    }

    #[test]
    fn round_trip_keeps_frames_and_values() {
        let t = sample();
        let back = read_tum(&write_tum(&t)).unwrap();
        assert_eq!(back.fps, 30.0);
        assert_eq!(back.frames.iter().map(|(f, p)| (*f, p.is_some())).collect::<Vec<_>>(), vec![(0, true), (1, false), (2, true), (5, false)]);
        for (f, p) in t.registered() {
            let q = back.pose(f).unwrap();
            assert!((p.translation - q.translation).amax() < 1e-12);
            assert!(p.rotation.angle_to(&q.rotation) < 1e-12);
        }
    }

    #[test]
    fn columns_hold_the_camera_center() {
        let text = write_tum(&sample());
        let line = text.lines().find(|l| l.starts_with("0 ")).unwrap();
        let xyz: Vec<f64> = line.split(' ').skip(1).take(3).map(|s| s.parse().unwrap()).collect();
        assert!((Vec3::new(xyz[0], xyz[1], xyz[2]) - Vec3::new(1.0, 2.0, 3.0)).amax() < 1e-12);
    }

    #[test]
    fn scene_header_round_trips() {
        let k = CameraIntrinsics::centered(700.0, 640, 360).unwrap();
        let model = SceneModel {
            trajectory: sample(),
            landmarks: Vec::new(),
            mean_reprojection_error: 0.37,
            intrinsics: k,
            status: crate::sfm::SfmStatus::Registered,
            flags: Vec::new(),
            attempts: 1,
        };
        let text = write_scene_tum(&model);
        assert_eq!(read_tum(&text).unwrap(), read_tum(&write_tum(&model.trajectory)).unwrap());
        let h = read_scene_header(&text).unwrap().unwrap();
        assert_eq!(h, SceneHeader { intrinsics: k, mean_reprojection_error: 0.37, registered_fraction: 0.5 });
        assert!(read_scene_header(&write_tum(&model.trajectory)).unwrap().is_none());
        let bad = text.replace("# registered_fraction 0.5", "# registered_fraction half");
        assert!(matches!(read_scene_header(&bad), Err(FormatError::Line { line: 4, .. })));
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "# fps 12\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 0\n";
        assert!(matches!(read_tum(bad), Err(FormatError::Line { line: 3, .. })));
        let bad = "0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n";
        assert!(matches!(read_tum(bad), Err(FormatError::Line { line: 2, .. })));
        let bad = "0 0 0 x 0 0 0 1\n";
        assert!(matches!(read_tum(bad), Err(FormatError::Line { line: 1, .. })));
        let bad = "0 0 0 0 0 0 0 2\n";
        assert!(matches!(read_tum(bad), Err(FormatError::Line { line: 1, .. })));
        let bad = "# unregistered 0\n0 0 0 0 0 0 0 1\n";
        assert!(matches!(read_tum(bad), Err(FormatError::Line { line: 1, .. })));
    }
}
