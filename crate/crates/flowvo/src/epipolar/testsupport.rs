//! Synthetic two-view scenes for the estimation tests: known camera
//! pair, known pose, exact projections.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Correspondence;
use crate::geometry::{CameraIntrinsics, Pixel2};

pub(crate) struct TwoViewSpec {
    pub n: usize,
    pub seed: u64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub plane_z: Option<f64>,
    pub k: CameraIntrinsics,
    pub k_prime: CameraIntrinsics,
}

impl Default for TwoViewSpec {
    fn default() -> Self {
        Self {
            n: 20,
            seed: 0,
            rotation: Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(0.2, 1.0, -0.3)),
                0.06,
            ),
            translation: Vector3::new(0.4, -0.15, 0.1),
            plane_z: None,
            k: CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            k_prime: CameraIntrinsics::new(520.0, 510.0, 330.0, 230.0),
        }
    }
}

impl TwoViewSpec {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn planar(mut self, z: f64) -> Self {
        self.plane_z = Some(z);
        self
    }

    pub fn with_pose(mut self, rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        self.rotation = rotation;
        self.translation = translation;
        self
    }
}

pub(crate) struct TwoView {
    pub matches: Vec<Correspondence>,
    pub points: Vec<Vector3<f64>>,
    pub f_true: Matrix3<f64>,
    pub k: CameraIntrinsics,
    pub k_prime: CameraIntrinsics,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

pub(crate) fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

pub(crate) fn fundamental_from_pose(
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
    rotation: &Rotation3<f64>,
    translation: &Vector3<f64>,
) -> Matrix3<f64> {
    k_prime.inverse_matrix().transpose() * skew(translation) * rotation.matrix() * k.inverse_matrix()
}

/// Unit Frobenius norm with the largest-magnitude entry positive, for
/// sign-insensitive comparison.
pub(crate) fn canonical(m: &Matrix3<f64>) -> Matrix3<f64> {
    *super::FundamentalMatrix::from_matrix(*m).unwrap().matrix()
}

pub(crate) fn two_view(spec: &TwoViewSpec) -> TwoView {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut matches = Vec::with_capacity(spec.n);
    let mut points = Vec::with_capacity(spec.n);
    while matches.len() < spec.n {
        let z = spec.plane_z.unwrap_or_else(|| rng.gen_range(4.0..10.0));
        let p1 = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5), z);
        let p2 = spec.rotation * p1 + spec.translation;
        let (Some(a), Some(b)) = (spec.k.project(&p1), spec.k_prime.project(&p2)) else {
            continue;
        };
        matches.push(Correspondence::with_identity_info(
            Pixel2::new(a.u, a.v),
            Pixel2::new(b.u, b.v),
        ));
        points.push(p1);
    }
    let f_true = fundamental_from_pose(&spec.k, &spec.k_prime, &spec.rotation, &spec.translation);
    TwoView {
        matches,
        points,
        f_true,
        k: spec.k,
        k_prime: spec.k_prime,
        rotation: spec.rotation,
        translation: spec.translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_matches_satisfy_the_epipolar_constraint() {
        let tv = two_view(&TwoViewSpec::default().with_n(50).with_seed(1));
        let f = canonical(&tv.f_true);
        for c in &tv.matches {
            let r = (c.x_prime.homogeneous().transpose() * f * c.x.homogeneous())[(0, 0)];
            assert!(r.abs() < 1e-9, "residual {r}");
        }
    }
}
