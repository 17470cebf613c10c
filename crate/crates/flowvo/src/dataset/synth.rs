//! Seeded two-view generators with planted per-match uncertainty.

use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::epipolar::{Correspondence, FundamentalMatrix};
use crate::geometry::{CameraIntrinsics, PoseSE3};
use crate::uncertainty::InfoMatrix2;

/// Gaussian pixel-noise model for the second view of a match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Isotropic { sigma: f64 },
    /// Principal axis at `angle` (radians from +u) with std `sigma_major`,
    /// orthogonal axis with std `sigma_minor`.
    Anisotropic { sigma_major: f64, sigma_minor: f64, angle: f64 },
}

impl NoiseModel {
    pub fn covariance(&self) -> Matrix2<f64> {
        match *self {
            NoiseModel::Isotropic { sigma } => Matrix2::identity() * sigma * sigma,
            NoiseModel::Anisotropic { sigma_major, sigma_minor, angle } => {
                let u = Vector2::new(angle.cos(), angle.sin());
                let v = Vector2::new(-angle.sin(), angle.cos());
                u * u.transpose() * sigma_major * sigma_major
                    + v * v.transpose() * sigma_minor * sigma_minor
            }
        }
    }

    /// Exact analytic inverse of the planted covariance. Zero-noise models
    /// have no inverse; those matches carry identity information instead.
    pub fn information(&self) -> InfoMatrix2 {
        match *self {
            NoiseModel::Isotropic { sigma } => {
                if sigma == 0.0 {
                    InfoMatrix2::identity()
                } else {
                    InfoMatrix2::isotropic(1.0 / (sigma * sigma))
                }
            }
            NoiseModel::Anisotropic { sigma_major, sigma_minor, angle } => {
                if sigma_major == 0.0 || sigma_minor == 0.0 {
                    return InfoMatrix2::identity();
                }
                let u = Vector2::new(angle.cos(), angle.sin());
                let v = Vector2::new(-angle.sin(), angle.cos());
                let m = u * u.transpose() / (sigma_major * sigma_major)
                    + v * v.transpose() / (sigma_minor * sigma_minor);
                InfoMatrix2::from_matrix(&m)
            }
        }
    }
}

/// One zero-mean draw from the model.
pub fn sample_noise(model: &NoiseModel, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    match *model {
        NoiseModel::Isotropic { sigma } => [sigma * g1, sigma * g2],
        NoiseModel::Anisotropic { sigma_major, sigma_minor, angle } => {
            let (s, c) = angle.sin_cos();
            let major = sigma_major * g1;
            let minor = sigma_minor * g2;
            [major * c - minor * s, major * s + minor * c]
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoViewConfig {
    pub n: usize,
    pub intrinsics: CameraIntrinsics,
    pub intrinsics_second: CameraIntrinsics,
    /// X_second = R X_first + t.
    pub pose: PoseSE3,
    pub noise: NoiseModel,
    /// Leading fraction of matches replaced by uniform gross outliers
    /// carrying sentinel information.
    pub outlier_fraction: f64,
    pub depth_range: (f64, f64),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Default for TwoViewConfig {
    fn default() -> Self {
        let axis = Vector3::new(0.2, 1.0, -0.3);
        Self {
            n: 50,
            intrinsics: CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            intrinsics_second: CameraIntrinsics::new(520.0, 510.0, 330.0, 230.0),
            pose: PoseSE3::new(
                Rotation3::new(axis.normalize() * 0.06),
                Vector3::new(0.4, -0.15, 0.1),
            ),
            noise: NoiseModel::Isotropic { sigma: 0.0 },
            outlier_fraction: 0.0,
            depth_range: (4.0, 10.0),
            x_range: (-2.0, 2.0),
            y_range: (-1.5, 1.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoViewSample {
    pub matches: Vec<Correspondence>,
    pub f_true: FundamentalMatrix,
    pub pose_true: PoseSE3,
    /// First-camera-frame positions, index-aligned with `matches`.
    pub points: Vec<Vector3<f64>>,
    pub outlier_mask: Vec<bool>,
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Projects seeded scene points into both views, perturbs the second-view
/// pixels with the planted noise, and attaches the exact inverse covariance
/// to each match. Pure function of (config, seed).
pub fn generate_two_view(cfg: &TwoViewConfig, seed: u64) -> TwoViewSample {
    assert!(cfg.n >= 8, "two-view estimation needs at least 8 matches");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let f_raw = cfg.intrinsics_second.inverse_matrix().transpose()
        * skew(&cfg.pose.translation)
        * cfg.pose.rotation.matrix()
        * cfg.intrinsics.inverse_matrix();
    let f_true = FundamentalMatrix::from_matrix(f_raw).expect("nonzero pose");

    let outliers = (cfg.n as f64 * cfg.outlier_fraction).floor() as usize;
    let info = cfg.noise.information();
    let mut matches = Vec::with_capacity(cfg.n);
    let mut points = Vec::with_capacity(cfg.n);
    let mut outlier_mask = Vec::with_capacity(cfg.n);

    while matches.len() < cfg.n {
        let x = Vector3::new(
            rng.gen_range(cfg.x_range.0..cfg.x_range.1),
            rng.gen_range(cfg.y_range.0..cfg.y_range.1),
            rng.gen_range(cfg.depth_range.0..cfg.depth_range.1),
        );
        let Some(x1) = cfg.intrinsics.project(&x) else {
            continue;
        };
        let Some(x2) = cfg.intrinsics_second.project(&cfg.pose.transform(&x)) else {
            continue;
        };
        let index = matches.len();
        if index < outliers {
            let u = rng.gen_range(0.0..2.0 * cfg.intrinsics_second.cx);
            let v = rng.gen_range(0.0..2.0 * cfg.intrinsics_second.cy);
            matches.push(Correspondence::new(
                x1,
                crate::geometry::Pixel2::new(u, v),
                InfoMatrix2::max_uncertainty(),
            ));
            outlier_mask.push(true);
        } else {
            let noise = sample_noise(&cfg.noise, &mut rng);
            matches.push(Correspondence::new(
                x1,
                crate::geometry::Pixel2::new(x2.u + noise[0], x2.v + noise[1]),
                info,
            ));
            outlier_mask.push(false);
        }
        points.push(x);
    }

    TwoViewSample { matches, f_true, pose_true: cfg.pose, points, outlier_mask }
}
