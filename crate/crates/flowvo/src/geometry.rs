//! Pixel, line, camera, and rigid-pose primitives shared by every stage.
//!
//! Conventions used throughout the crate: image origin at the top-left
//! corner, u rightward, v downward. The camera frame is x right, y down,
//! z forward, so points below the camera have positive y. A relative pose
//! (R, t) maps frame-1 coordinates into frame 2: X2 = R * X1 + t.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate line: a = b = 0")]
    DegenerateLine,
    #[error("matrix is not a rotation: orthonormality deviation {0:.3e}")]
    InvalidRotation(f64),
}

/// Image point in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel2 {
    pub u: f64,
    pub v: f64,
}

impl Pixel2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Homogeneous lift (u, v, 1).
    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, 1.0)
    }

    pub fn distance(&self, other: &Pixel2) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Line a*u + b*v + c = 0 in pixel units, stored unnormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EpipolarLine {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Signed algebraic residual a*u + b*v + c.
    pub fn eval(&self, p: Pixel2) -> f64 {
        self.a * p.u + self.b * p.v + self.c
    }

    pub fn normal_norm(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

/// Line in the second image induced by a point in the first: l = F * x~.
pub fn epipolar_line(f: &Matrix3<f64>, x: Pixel2) -> EpipolarLine {
    let l = f * x.homogeneous();
    EpipolarLine::new(l.x, l.y, l.z)
}

/// Perpendicular pixel distance |a*u + b*v + c| / sqrt(a^2 + b^2).
pub fn point_line_euclidean(x: Pixel2, l: &EpipolarLine) -> Result<f64, GeometryError> {
    if l.is_degenerate() {
        return Err(GeometryError::DegenerateLine);
    }
    Ok(l.eval(x).abs() / l.normal_norm())
}

/// Pinhole camera parameters in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        debug_assert!(fx > 0.0 && fy > 0.0);
        Self { fx, fy, cx, cy, skew: 0.0 }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        self.matrix().try_inverse().expect("fx, fy > 0")
    }

    /// Projects a camera-frame point; None when at or behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Pixel2> {
        if p.z <= 0.0 {
            return None;
        }
        let x = p.x / p.z;
        let y = p.y / p.z;
        Some(Pixel2::new(
            self.fx * x + self.skew * y + self.cx,
            self.fy * y + self.cy,
        ))
    }

    /// Back-projected ray direction with unit forward component.
    pub fn ray(&self, p: Pixel2) -> Vector3<f64> {
        self.inverse_matrix() * p.homogeneous()
    }

    /// Intrinsics of the same camera after resampling the image by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            skew: self.skew * factor,
        }
    }
}

/// Rigid transform: X_out = R * X_in + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Builds from a raw matrix, requiring orthonormality within 1e-9.
    pub fn from_parts(r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self, GeometryError> {
        let dev = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det_dev = (r.determinant() - 1.0).abs();
        if dev > 1e-9 || det_dev > 1e-9 {
            return Err(GeometryError::InvalidRotation(dev.max(det_dev)));
        }
        Ok(Self { rotation: Rotation3::from_matrix_unchecked(r), translation: t })
    }

    /// Builds from a raw matrix, projecting R to the nearest rotation.
    pub fn from_parts_projected(r: Matrix3<f64>, t: Vector3<f64>) -> Self {
        match Self::from_parts(r, t) {
            Ok(p) => p,
            Err(_) => Self { rotation: Rotation3::from_matrix(&r), translation: t },
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// (self o other)(p) = self(other(p)).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self { rotation: r_inv, translation: -(r_inv * self.translation) }
    }

    /// Geodesic rotation distance in radians. The trace-derived cosine is
    /// clamped so nearly identical rotations report 0 instead of NaN.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let rel = self.rotation.inverse() * other.rotation;
        ((rel.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Rotation magnitude in radians, clamped like `rotation_angle_to`.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation)
    }
}

/// Scene point with an optional 3x3 information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub position: Vector3<f64>,
    pub info: Option<Matrix3<f64>>,
}

impl Point3 {
    pub fn new(position: Vector3<f64>) -> Self {
        Self { position, info: None }
    }

    pub fn with_info(position: Vector3<f64>, info: Matrix3<f64>) -> Self {
        Self { position, info: Some(info) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epipolar_line_canonical() {
        let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let l = epipolar_line(&f, Pixel2::new(0.0, 0.0));
        assert_eq!((l.a, l.b, l.c), (0.0, -1.0, 0.0));
        assert_eq!(l.eval(Pixel2::new(7.0, 0.0)), 0.0);
    }

    #[test]
    fn epipolar_line_zero_matrix_is_degenerate() {
        let l = epipolar_line(&Matrix3::zeros(), Pixel2::new(3.0, -2.0));
        assert!(l.is_degenerate());
        assert_eq!(
            point_line_euclidean(Pixel2::new(1.0, 1.0), &l),
            Err(GeometryError::DegenerateLine)
        );
    }

    #[test]
    fn epipolar_line_matches_manual_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let f = Matrix3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let x = Pixel2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let l = epipolar_line(&f, x);
            let manual = [
                f[(0, 0)] * x.u + f[(0, 1)] * x.v + f[(0, 2)],
                f[(1, 0)] * x.u + f[(1, 1)] * x.v + f[(1, 2)],
                f[(2, 0)] * x.u + f[(2, 1)] * x.v + f[(2, 2)],
            ];
            assert_relative_eq!(l.a, manual[0], max_relative = 1e-12);
            assert_relative_eq!(l.b, manual[1], max_relative = 1e-12);
            assert_relative_eq!(l.c, manual[2], max_relative = 1e-12);
        }
    }

    #[test]
    fn point_line_axis_aligned() {
        let l = EpipolarLine::new(0.0, 1.0, -5.0);
        assert_eq!(point_line_euclidean(Pixel2::new(0.0, 0.0), &l).unwrap(), 5.0);
    }

    #[test]
    fn point_line_incidence() {
        let l = EpipolarLine::new(2.0, -1.0, 3.0);
        let on = Pixel2::new(1.0, 5.0);
        assert_eq!(l.eval(on), 0.0);
        assert_eq!(point_line_euclidean(on, &l).unwrap(), 0.0);
    }

    #[test]
    fn point_line_hand_expansion() {
        let l = EpipolarLine::new(3.0, 4.0, 0.0);
        let d = point_line_euclidean(Pixel2::new(3.0, 4.0), &l).unwrap();
        assert_relative_eq!(d, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_round_trip() {
        let k = CameraIntrinsics::new(500.0, 480.0, 320.0, 240.0);
        let p = Vector3::new(0.3, -0.2, 4.0);
        let px = k.project(&p).unwrap();
        let ray = k.ray(px);
        assert_relative_eq!(ray * p.z, p, epsilon = 1e-9);
        assert!(k.project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> PoseSE3 {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let angle = rng.gen_range(-3.0..3.0);
        let r = Rotation3::from_scaled_axis(axis.normalize() * angle);
        let t = Vector3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        PoseSE3::new(r, t)
    }

    #[test]
    fn pose_compose_associative_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            assert_relative_eq!(left.rotation.matrix(), right.rotation.matrix(), epsilon = 1e-9);
            assert_relative_eq!(left.translation, right.translation, epsilon = 1e-9);

            let id = a.compose(&a.inverse());
            assert_relative_eq!(id.rotation.matrix(), &Matrix3::identity(), epsilon = 1e-9);
            assert!(id.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn pose_transform_matches_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_relative_eq!(a.compose(&b).transform(&p), a.transform(&b.transform(&p)), epsilon = 1e-9);
    }

    #[test]
    fn from_parts_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(PoseSE3::from_parts(m, Vector3::zeros()).is_err());
        let fixed = PoseSE3::from_parts_projected(m, Vector3::zeros());
        let r = fixed.rotation.matrix();
        assert_relative_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-9);
    }
}
