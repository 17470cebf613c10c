//! Row weights for the eight-point system. Each match contributes an
//! algebraic residual whose magnitude depends on the local image
//! geometry; these scalings convert residuals into comparable
//! distances, either isotropically (Sampson) or along the metric
//! induced by the match's information matrix (Mahalanobis).

use nalgebra::{Matrix3, Vector2};

use super::{Correspondence, EpipolarError};
use crate::geometry::{EpipolarLine, Pixel2};
use crate::uncertainty::InfoMatrix2;

/// Squared Mahalanobis distance (x - mu)^T Y (x - mu).
pub fn mahalanobis_sq(x: Pixel2, mu: Pixel2, info: &InfoMatrix2) -> Result<f64, EpipolarError> {
    if !info.is_positive_definite() {
        return Err(EpipolarError::NotPositiveDefinite);
    }
    let d = Vector2::new(x.u - mu.u, x.v - mu.v);
    Ok(info.yxx * d.x * d.x + 2.0 * info.yxy * d.x * d.y + info.yyy * d.y * d.y)
}

/// Minimum Mahalanobis distance from mu to any point on the line,
/// in closed form:
///
///   min d_M = |a u0 + b v0 + c| * sqrt(det(Y) / (a^2 Yyy + b^2 Yxx - 2 a b Yxy))
pub fn min_mahalanobis_point_line(
    mu: Pixel2,
    info: &InfoMatrix2,
    line: &EpipolarLine,
) -> Result<f64, EpipolarError> {
    if !info.is_positive_definite() {
        return Err(EpipolarError::NotPositiveDefinite);
    }
    if line.is_degenerate() {
        return Err(EpipolarError::DegenerateLine);
    }
    let den = line.a * line.a * info.yyy + line.b * line.b * info.yxx
        - 2.0 * line.a * line.b * info.yxy;
    if den <= 0.0 {
        // Positive-definiteness of Y makes den a positive quadratic form
        // of (a, b) != 0; reaching this means the inputs are corrupt.
        return Err(EpipolarError::QuadraticFormInvariant);
    }
    Ok(line.eval(mu).abs() * (info.det() / den).sqrt())
}

/// Mahalanobis row weight for the epipolar line of x under f. With
/// l = F x~ = (a, b, c):
///
///   phi = sqrt(det(Y) / (a^2 Yyy + b^2 Yxx - 2 a b Yxy))
///
/// so that phi * |x'~^T F x~| equals the minimum Mahalanobis distance
/// from x' to the line.
pub fn mahalanobis_weight(
    f: &Matrix3<f64>,
    x: Pixel2,
    info: &InfoMatrix2,
) -> Result<f64, EpipolarError> {
    if !info.is_positive_definite() {
        return Err(EpipolarError::NotPositiveDefinite);
    }
    let line = crate::geometry::epipolar_line(f, x);
    if line.is_degenerate() {
        return Err(EpipolarError::DegenerateLine);
    }
    let den = line.a * line.a * info.yyy + line.b * line.b * info.yxx
        - 2.0 * line.a * line.b * info.yxy;
    if den <= 0.0 {
        return Err(EpipolarError::QuadraticFormInvariant);
    }
    Ok((info.det() / den).sqrt())
}

/// First-order geometric (Sampson) row weight:
///
///   phi = 1 / sqrt((F x~)_1^2 + (F x~)_2^2 + (F^T x'~)_1^2 + (F^T x'~)_2^2)
pub fn sampson_weight(f: &Matrix3<f64>, c: &Correspondence) -> Result<f64, EpipolarError> {
    let l2 = f * c.x.homogeneous();
    let l1 = f.transpose() * c.x_prime.homogeneous();
    let den = l2.x * l2.x + l2.y * l2.y + l1.x * l1.x + l1.y * l1.y;
    if den == 0.0 {
        return Err(EpipolarError::ZeroDenominator);
    }
    Ok(1.0 / den.sqrt())
}
