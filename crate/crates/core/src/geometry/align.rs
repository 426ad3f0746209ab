use nalgebra::{Matrix3, UnitQuaternion};

use super::{GeometryError, Mat3, Pose, Trajectory, Vec3};

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Re-expresses a world-to-camera pose in the transformed world frame.
    ///
    /// The camera center moves by the similarity and the camera-frame
    /// translation is scaled along with it.
    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        let r = pose.rotation_matrix() * self.rotation.transpose();
        let t = self.scale * pose.translation - r * self.translation;
        Pose::from_matrix(&r, t)
    }

    pub fn apply_trajectory(&self, traj: &Trajectory) -> Trajectory {
        Trajectory {
            frames: traj.frames.iter().map(|(f, p)| (*f, p.map(|p| self.apply_pose(&p)))).collect(),
            fps: traj.fps,
        }
    }

    pub fn rotation_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }
}

/// Least-squares similarity (Umeyama) taking `src` onto `dst`.
pub fn umeyama_points(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Similarity, GeometryError> {
    assert_eq!(src.len(), dst.len(), "point sets must be paired");
    let n = src.len();
    if n < 3 {
        return Err(GeometryError::InsufficientPoints(n));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vec3>() * inv_n;
    let mu_d = dst.iter().sum::<Vec3>() * inv_n;

    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sc, dc) = (s - mu_s, d - mu_d);
        cov += dc * sc.transpose();
        scatter += sc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let sv = scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
        return Err(GeometryError::DegenerateGeometry);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    let mut s = Mat3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        let d = Mat3::from_diagonal(&svd.singular_values);
        (d * s).trace() / var_s
    } else {
        1.0
    };
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(Similarity { scale, rotation, translation })
}

/// Aligns camera centers of `src` onto `dst` over frames registered in both.
pub fn umeyama_align(src: &Trajectory, dst: &Trajectory, with_scale: bool) -> Result<Similarity, GeometryError> {
    let pairs = src.common_centers(dst);
    let s: Vec<Vec3> = pairs.iter().map(|(_, a, _)| *a).collect();
    let d: Vec<Vec3> = pairs.iter().map(|(_, _, b)| *b).collect();
    umeyama_points(&s, &d, with_scale)
}
