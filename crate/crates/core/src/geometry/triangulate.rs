use nalgebra::{Matrix4, SMatrix};

use super::{CameraIntrinsics, GeometryError, Point2, Point3, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Point3,
    /// False when the point lies behind at least one of the cameras.
    pub in_front: bool,
}

/// Linear (DLT) triangulation from two views sharing intrinsics.
pub fn triangulate(
    pose1: &Pose,
    pose2: &Pose,
    k: &CameraIntrinsics,
    p1: &Point2,
    p2: &Point2,
) -> Result<Triangulation, GeometryError> {
    triangulate_views(&[(*pose1, *k, *p1), (*pose2, *k, *p2)])
}

/// Homogeneous DLT over any number of views, solved in normalized coordinates.
pub fn triangulate_views(views: &[(Pose, CameraIntrinsics, Point2)]) -> Result<Triangulation, GeometryError> {
    assert!(views.len() >= 2, "triangulation needs two views");
    let c0 = views[0].0.center();
    if views.iter().all(|(p, _, _)| (p.center() - c0).norm() < 1e-12) {
        return Err(GeometryError::ZeroBaseline);
    }

    // Accumulate A^T A so the system stays 4x4 regardless of view count.
    let mut ata = Matrix4::<f64>::zeros();
    for (pose, k, px) in views {
        let x = k.unproject(px);
        let r = pose.rotation_matrix();
        let t = pose.translation;
        let mut p = SMatrix::<f64, 3, 4>::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        p.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let row0 = p.row(0);
        let row1 = p.row(1);
        let row2 = p.row(2);
        let a = x.x * row2 - row0;
        let b = x.y * row2 - row1;
        let a = a.normalize();
        let b = b.normalize();
        ata += a.transpose() * a + b.transpose() * b;
    }
    let eig = ata.symmetric_eigen();
    let (i_min, _) = eig.eigenvalues.argmin();
    let h = eig.eigenvectors.column(i_min);
    if h[3].abs() < 1e-300 {
        return Err(GeometryError::ZeroBaseline);
    }
    let point = Point3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    let in_front = views.iter().all(|(pose, _, _)| pose.transform(&point).z > 0.0);
    Ok(Triangulation { point, in_front })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::testutil::random_pose;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn looking_at(center: Vec3) -> Pose {
        Pose::from_center(UnitQuaternion::identity(), &center)
    }

    #[test]
    fn recovers_exact_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let k = CameraIntrinsics::centered(600.0, 640, 480).unwrap();
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let x = Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (ca, cb) = (a.transform(&x), b.transform(&x));
            if ca.z < 0.5 || cb.z < 0.5 {
                continue;
            }
            let pa = k.project(&ca).unwrap();
            let pb = k.project(&cb).unwrap();
            let t = triangulate(&a, &b, &k, &pa, &pb).unwrap();
            assert!(t.in_front);
            assert!((t.point - x).norm() < 1e-9 * (1.0 + x.coords.norm()), "{:?} vs {:?}", t.point, x);
        }
    }

    #[test]
    fn identical_poses_have_zero_baseline() {
        let k = CameraIntrinsics::centered(600.0, 640, 480).unwrap();
        let p = looking_at(Vec3::zeros());
        let r = triangulate(&p, &p, &k, &Point2::new(1.0, 2.0), &Point2::new(3.0, 4.0));
        assert_eq!(r, Err(GeometryError::ZeroBaseline));
    }

    #[test]
    fn point_behind_is_flagged() {
        let k = CameraIntrinsics::centered(500.0, 640, 480).unwrap();
        let a = looking_at(Vec3::zeros());
        let b = looking_at(Vec3::new(1.0, 0.0, 0.0));
        let x = Point3::new(0.3, 0.1, -4.0);
        // Project through the pinhole ignoring cheirality.
        let proj = |p: &Pose| {
            let c = p.transform(&x);
            Point2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy)
        };
        let t = triangulate(&a, &b, &k, &proj(&a), &proj(&b)).unwrap();
        assert!(!t.in_front);
    }

    /// 0.5 px noise, 10 units deep, 0.5 unit baseline: the depth error scale is
    /// depth^2 * sigma / (f * baseline), ~0.17 units at f = 600. The worst case
    /// over these 2000 seeded draws measured 0.872; frozen at 1.0.
    #[test]
    fn noisy_triangulation_error_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let k = CameraIntrinsics::centered(600.0, 640, 480).unwrap();
        let a = looking_at(Vec3::zeros());
        let b = looking_at(Vec3::new(0.5, 0.0, 0.0));
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let x = Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), 10.0);
            let mut pa = a.project(&k, &x).unwrap();
            let mut pb = b.project(&k, &x).unwrap();
            pa.x += noise.sample(&mut rng);
            pa.y += noise.sample(&mut rng);
            pb.x += noise.sample(&mut rng);
            pb.y += noise.sample(&mut rng);
            let t = triangulate(&a, &b, &k, &pa, &pb).unwrap();
            assert!(t.in_front);
            worst = worst.max((t.point - x).norm());
        }
        assert!(worst < 1.0, "worst error {worst}");
    }
}
