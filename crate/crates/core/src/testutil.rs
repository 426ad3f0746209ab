use nalgebra::UnitQuaternion;
use rand::Rng;

use crate::geometry::{Pose, Vec3};

pub(crate) fn random_pose<R: Rng>(rng: &mut R) -> Pose {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let q = UnitQuaternion::from_scaled_axis(axis * 1.5);
    let t = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    Pose::new(q, t)
}
