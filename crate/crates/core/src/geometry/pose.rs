use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion};

use super::{GeometryError, Mat3, Point2, Point3, Vec3};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the frame center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} frame",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Pixel of a camera-frame point, `None` when it is not in front of the camera.
    pub fn project(&self, p_cam: &Vec3) -> Option<Point2> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Normalized image coordinates (`K^-1 [u v 1]^T`, z = 1).
    pub fn unproject(&self, p: &Point2) -> Vec3 {
        Vec3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Intrinsics of the same camera after resizing the frame by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }

    /// Scale factor that brings the frame height to 720 px (aspect preserved).
    pub fn scale_to_720p(&self) -> f64 {
        720.0 / self.height as f64
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vec3::zeros() }
    }

    /// Canonicalizes the quaternion so that `w >= 0`.
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation: canonical(rotation), translation }
    }

    pub fn from_matrix(rotation: &Mat3, translation: Vec3) -> Self {
        let r = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&r), translation)
    }

    /// Pose of a camera at world position `center` with world-to-camera rotation `rotation`.
    pub fn from_center(rotation: UnitQuaternion<f64>, center: &Vec3) -> Self {
        Self::new(rotation, -(rotation * center))
    }

    /// Quaternion as `(qx, qy, qz, qw)`, the order used in trajectory files.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn from_xyzw(t: Vec3, q: [f64; 4]) -> Self {
        let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]));
        Self::new(quat, t)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn transform(&self, p: &Point3) -> Vec3 {
        self.rotation * p.coords + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn project(&self, k: &CameraIntrinsics, p: &Point3) -> Option<Point2> {
        k.project(&self.transform(p))
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Pose taking camera-`a` coordinates to camera-`b` coordinates, so that
/// `relative_pose(a, b).compose(a) == b`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    b.compose(&a.inverse())
}

/// Geodesic angle of a rotation, in degrees.
pub fn rotation_angle_deg(q: &UnitQuaternion<f64>) -> f64 {
    // atan2 form stays accurate near zero, unlike acos of the trace.
    let v = q.imag().norm();
    (2.0 * v.atan2(q.w.abs())).to_degrees()
}

/// Camera poses indexed by frame; unregistered frames carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<(u32, Option<Pose>)>,
    pub fps: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<(u32, Option<Pose>)>, fps: f64) -> Result<Self, GeometryError> {
        if frames.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(GeometryError::InvalidTrajectory("frame indices must be strictly increasing".into()));
        }
        if !(fps > 0.0) {
            return Err(GeometryError::InvalidTrajectory(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, fps })
    }

    /// Fully registered trajectory over frames `0..poses.len()`.
    pub fn from_poses(poses: Vec<Pose>, fps: f64) -> Self {
        Self { frames: poses.into_iter().enumerate().map(|(i, p)| (i as u32, Some(p))).collect(), fps }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn registered_count(&self) -> usize {
        self.frames.iter().filter(|(_, p)| p.is_some()).count()
    }

    pub fn registered_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.registered_count() as f64 / self.frames.len() as f64
    }

    pub fn pose(&self, frame: u32) -> Option<&Pose> {
        self.frames
            .binary_search_by_key(&frame, |(f, _)| *f)
            .ok()
            .and_then(|i| self.frames[i].1.as_ref())
    }

    pub fn registered(&self) -> impl Iterator<Item = (u32, &Pose)> {
        self.frames.iter().filter_map(|(f, p)| p.as_ref().map(|p| (*f, p)))
    }

    /// Frames registered in both trajectories, as pairs of camera centers `(self, other)`.
    pub fn common_centers(&self, other: &Trajectory) -> Vec<(u32, Vec3, Vec3)> {
        self.registered()
            .filter_map(|(f, p)| other.pose(f).map(|q| (f, p.center(), q.center())))
            .collect()
    }

    /// Largest distance between any two registered camera centers.
    pub fn extent(&self) -> f64 {
        let centers: Vec<Vec3> = self.registered().map(|(_, p)| p.center()).collect();
        let mut best = 0.0f64;
        for (i, a) in centers.iter().enumerate() {
            for b in &centers[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relative_pose_identity_and_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        let r = relative_pose(&Pose::identity(), &p);
        assert!((r.rotation_matrix() - p.rotation_matrix()).norm() < 1e-12);
        assert!((r.translation - p.translation).norm() < 1e-12);

        let s = relative_pose(&p, &p);
        assert!(rotation_angle_deg(&s.rotation) < 1e-9);
        assert!(s.translation.norm() < 1e-12);
    }

    #[test]
    fn relative_pose_composes_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let rel = relative_pose(&a, &b);
            // Oracle: compose the 4x4 homogeneous matrices directly.
            let to_h = |p: &Pose| {
                let mut m = nalgebra::Matrix4::<f64>::identity();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation_matrix());
                m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
                m
            };
            let composed = to_h(&rel) * to_h(&a);
            assert!((composed - to_h(&b)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn quaternion_is_canonical_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_pose(&mut rng).inverse();
            assert!(p.rotation.w >= 0.0);
            assert!((p.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            let r = p.rotation_matrix();
            assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn center_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_pose(&mut rng);
        let c = p.center();
        assert!(p.transform(&Point3::from(c)).norm() < 1e-12);
        let q = Pose::from_center(p.rotation, &c);
        assert!((q.translation - p.translation).norm() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 11.0, 0.0, 10, 10).is_err());
        let k = CameraIntrinsics::centered(500.0, 640, 360).unwrap();
        assert!((k.matrix() * k.inverse_matrix() - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn trajectory_rejects_unordered_frames() {
        let p = Pose::identity();
        assert!(Trajectory::new(vec![(1, Some(p)), (1, None)], 12.0).is_err());
        let t = Trajectory::new(vec![(0, Some(p)), (1, None), (2, Some(p)), (3, None)], 12.0).unwrap();
        assert_eq!(t.registered_fraction(), 0.5);
    }
}
