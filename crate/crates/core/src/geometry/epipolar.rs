use super::{skew, CameraIntrinsics, GeometryError, Mat3, Point2, Pose, Vec3};

/// 3x3 fundamental matrix, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(pub Mat3);

impl FundamentalMatrix {
    /// Scales so the largest-magnitude entry equals 1.
    pub fn normalized(m: Mat3) -> Self {
        let (mut best, mut val) = (0.0f64, 1.0);
        for &x in m.iter() {
            if x.abs() > best {
                best = x.abs();
                val = x;
            }
        }
        if best == 0.0 {
            return Self(m);
        }
        Self(m / val)
    }

    /// Closest rank-2 matrix in Frobenius norm, renormalized.
    pub fn enforce_rank2(m: &Mat3) -> Self {
        let mut svd = m.svd(true, true);
        let (i_min, _) = svd.singular_values.argmin();
        svd.singular_values[i_min] = 0.0;
        Self::normalized(svd.recompose().expect("u and v were computed"))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Algebraic residual `x2^T F x1`.
    pub fn residual(&self, p1: &Point2, p2: &Point2) -> f64 {
        let x1 = Vec3::new(p1.x, p1.y, 1.0);
        let x2 = Vec3::new(p2.x, p2.y, 1.0);
        x2.dot(&(self.0 * x1))
    }

    /// Ratio of smallest to largest singular value.
    pub fn rank_ratio(&self) -> f64 {
        let s = self.0.singular_values();
        s.min() / s.max()
    }
}

/// `F = K2^-T [t]x R K1^-1` for the relative pose taking camera 1 to camera 2.
pub fn fundamental_from_relpose(
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    rel: &Pose,
) -> Result<FundamentalMatrix, GeometryError> {
    if rel.translation.norm() < 1e-12 {
        return Err(GeometryError::Degenerate);
    }
    let essential = skew(&rel.translation) * rel.rotation_matrix();
    let f = k2.inverse_matrix().transpose() * essential * k1.inverse_matrix();
    Ok(FundamentalMatrix::normalized(f))
}

/// First-order squared distance (pixels²) of `(p1, p2)` to the epipolar constraint.
pub fn sampson_error(f: &FundamentalMatrix, p1: &Point2, p2: &Point2) -> Result<f64, GeometryError> {
    let x1 = Vec3::new(p1.x, p1.y, 1.0);
    let x2 = Vec3::new(p2.x, p2.y, 1.0);
    let fx1 = f.0 * x1;
    let ftx2 = f.0.tr_mul(&x2);
    let num = x2.dot(&fx1);
    let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    if den < 1e-18 {
        return Err(GeometryError::DivisionDegenerate);
    }
    Ok(num * num / den)
}

/// Sampson error without the degeneracy check, for dense per-pixel loops.
#[inline]
pub(crate) fn sampson_unchecked(f: &Mat3, x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    let a = f[(0, 0)] * x1 + f[(0, 1)] * y1 + f[(0, 2)];
    let b = f[(1, 0)] * x1 + f[(1, 1)] * y1 + f[(1, 2)];
    let c = f[(2, 0)] * x1 + f[(2, 1)] * y1 + f[(2, 2)];
    let d = f[(0, 0)] * x2 + f[(1, 0)] * y2 + f[(2, 0)];
    let e = f[(0, 1)] * x2 + f[(1, 1)] * y2 + f[(2, 1)];
    let num = x2 * a + y2 * b + c;
    let den = a * a + b * b + d * d + e * e;
    if den < 1e-18 {
        return f64::INFINITY;
    }
    num * num / den
}
