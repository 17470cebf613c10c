//! Translational scale recovery and application. A unit-baseline pose
//! only fixes direction; these estimators pin down the magnitude from
//! the known camera height over the ground plane or from the ratio to
//! an already-metric depth map.

use super::depth::DepthMap;
use super::plane::Plane;
use super::ReconstructError;
use crate::geometry::{Point3, PoseSE3};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleSource {
    GroundPlane,
    DepthRatio,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub s: f64,
    pub source: ScaleSource,
    /// Support: inlier or overlap fraction in [0, 1].
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleMode {
    Ground,
    Aerial,
}

/// s = -(b h) / d from the ground plane and the camera height.
pub fn scale_from_height(plane: &Plane, h: f64) -> Result<ScaleEstimate, ReconstructError> {
    if plane.d == 0.0 {
        return Err(ReconstructError::InvalidScale);
    }
    let s = -(plane.b * h) / plane.d;
    if s <= 0.0 || !s.is_finite() {
        return Err(ReconstructError::InvalidScale);
    }
    Ok(ScaleEstimate { s, source: ScaleSource::GroundPlane, quality: 1.0 })
}

/// Median of prev/curr depth over the jointly valid pixels; quality is
/// the fraction of previously valid pixels that survived into the
/// overlap.
pub fn scale_from_depth_ratio(
    prev: &DepthMap,
    curr: &DepthMap,
) -> Result<ScaleEstimate, ReconstructError> {
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(ReconstructError::MismatchedSizes);
    }
    let prev_valid = prev.valid_count();
    if prev_valid == 0 {
        return Err(ReconstructError::EmptyOverlap);
    }
    let mut ratios = Vec::new();
    for y in 0..prev.height() {
        for x in 0..prev.width() {
            if let (Some((dp, _)), Some((dc, _))) = (prev.get(x, y), curr.get(x, y)) {
                ratios.push(dp / dc);
            }
        }
    }
    let Some(s) = stats::median(&ratios) else {
        return Err(ReconstructError::EmptyOverlap);
    };
    Ok(ScaleEstimate {
        s,
        source: ScaleSource::DepthRatio,
        quality: ratios.len() as f64 / prev_valid as f64,
    })
}

/// Combines the two per-frame scale estimates. Ground vehicles average
/// whatever is available; aerial platforms trust the depth-ratio scale
/// and fall back to the ground plane only when the depth prior overlap
/// collapses below 5%.
pub fn fuse_scales(
    ground: Option<&ScaleEstimate>,
    depth: Option<&ScaleEstimate>,
    mode: VehicleMode,
    overlap_fraction: f64,
) -> Result<ScaleEstimate, ReconstructError> {
    match mode {
        VehicleMode::Ground => {
            let available: Vec<&ScaleEstimate> =
                [ground, depth].into_iter().flatten().collect();
            if available.is_empty() {
                return Err(ReconstructError::NoValidInput);
            }
            let s = available.iter().map(|e| e.s).sum::<f64>() / available.len() as f64;
            let quality =
                available.iter().map(|e| e.quality).fold(f64::INFINITY, f64::min);
            Ok(ScaleEstimate { s, source: ScaleSource::Fused, quality })
        }
        VehicleMode::Aerial => {
            let (first, second) = if overlap_fraction < 0.05 {
                (ground, depth)
            } else {
                (depth, ground)
            };
            first
                .or(second)
                .copied()
                .ok_or(ReconstructError::NoValidInput)
        }
    }
}

/// Multiplies the estimated scale through every metric quantity:
/// translation, point coordinates, depths and stds; information
/// matrices shrink by s^2.
pub fn apply_scale(
    pose: &PoseSE3,
    points: &[Point3],
    depth: &DepthMap,
    s: f64,
) -> (PoseSE3, Vec<Point3>, DepthMap) {
    assert!(s > 0.0);
    let scaled_pose = PoseSE3::new(pose.rotation, pose.translation * s);
    let scaled_points = points
        .iter()
        .map(|p| Point3 {
            position: p.position * s,
            info: p.info.map(|m| m / (s * s)),
        })
        .collect();
    (scaled_pose, scaled_points, depth.scaled(s))
}
