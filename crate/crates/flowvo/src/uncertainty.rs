//! Bivariate information matrices attached to pixel measurements.
//!
//! An InfoMatrix2 is the inverse of a 2x2 position covariance in pixel
//! units. Matches whose uncertainty could not be estimated carry the
//! maximum-uncertainty sentinel so downstream weighting stays well posed.

use nalgebra::Matrix2;

/// Information floor for the maximum-uncertainty sentinel, in 1/px^2.
pub const MAX_UNCERTAINTY_INFO: f64 = 1e-6;

/// Symmetric positive-definite 2x2 information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMatrix2 {
    pub yxx: f64,
    pub yxy: f64,
    pub yyy: f64,
}

impl InfoMatrix2 {
    pub const fn new(yxx: f64, yxy: f64, yyy: f64) -> Self {
        Self { yxx, yxy, yyy }
    }

    pub const fn identity() -> Self {
        Self { yxx: 1.0, yxy: 0.0, yyy: 1.0 }
    }

    /// Sentinel carried by unreliable matches.
    pub const fn max_uncertainty() -> Self {
        Self { yxx: MAX_UNCERTAINTY_INFO, yxy: 0.0, yyy: MAX_UNCERTAINTY_INFO }
    }

    pub fn is_sentinel(&self) -> bool {
        *self == Self::max_uncertainty()
    }

    pub fn isotropic(info: f64) -> Self {
        Self { yxx: info, yxy: 0.0, yyy: info }
    }

    pub fn det(&self) -> f64 {
        self.yxx * self.yyy - self.yxy * self.yxy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.yxx > 0.0 && self.det() > 0.0
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.yxx, self.yxy, self.yxy, self.yyy)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self { yxx: m[(0, 0)], yxy: 0.5 * (m[(0, 1)] + m[(1, 0)]), yyy: m[(1, 1)] }
    }

    /// Covariance P = Y^-1; None when Y is singular.
    pub fn covariance(&self) -> Option<Matrix2<f64>> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Matrix2::new(self.yyy, -self.yxy, -self.yxy, self.yxx) / det)
    }

    pub fn from_covariance(p: &Matrix2<f64>) -> Option<Self> {
        let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Self::from_matrix(
            &(Matrix2::new(p[(1, 1)], -p[(0, 1)], -p[(1, 0)], p[(0, 0)]) / det),
        ))
    }

    /// Eigenvalues of the symmetric matrix, smallest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.yxx + self.yyy);
        let radius = (0.25 * (self.yxx - self.yyy).powi(2) + self.yxy * self.yxy).sqrt();
        (mean - radius, mean + radius)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    /// Trace of the covariance, the scalar uncertainty used for ordering.
    pub fn covariance_trace(&self) -> f64 {
        (self.yxx + self.yyy) / self.det()
    }

    /// Floors the eigenvalues at `floor`, keeping the eigenbasis.
    pub fn clamp_positive_definite(&self, floor: f64) -> Self {
        let (lo, hi) = self.eigenvalues();
        if lo >= floor {
            return *self;
        }
        // Eigenvector for `hi`; falls back to axes when already diagonal.
        let (ex, ey) = if self.yxy.abs() > 0.0 {
            (hi - self.yyy, self.yxy)
        } else if self.yxx >= self.yyy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n = (ex * ex + ey * ey).sqrt();
        let (ex, ey) = if n > 0.0 { (ex / n, ey / n) } else { (1.0, 0.0) };
        let hi = hi.max(floor);
        let lo = floor;
        // Y = hi * e e^T + lo * e_perp e_perp^T with e_perp = (-ey, ex).
        Self {
            yxx: hi * ex * ex + lo * ey * ey,
            yxy: hi * ex * ey - lo * ex * ey,
            yyy: hi * ey * ey + lo * ex * ex,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { yxx: self.yxx * k, yxy: self.yxy * k, yyy: self.yyy * k }
    }
}
