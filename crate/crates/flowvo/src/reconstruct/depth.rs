//! Per-pixel depth with standard deviation, frame-to-frame
//! propagation, and information-weighted fusion.

use nalgebra::Vector3;

use super::ReconstructError;
use crate::flow::FlowField;
use crate::geometry::{CameraIntrinsics, PoseSE3};

/// Std multiplier applied on every propagation step.
pub const DEPTH_STD_INFLATION: f64 = 1.05;

/// Scene depth per pixel in scene units. Valid pixels have depth > 0
/// and std >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    std: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            std: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        std: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, ReconstructError> {
        let n = width * height;
        if depth.len() != n || std.len() != n || valid.len() != n {
            return Err(ReconstructError::MismatchedSizes);
        }
        for i in 0..n {
            if valid[i] && (depth[i] <= 0.0 || std[i] < 0.0) {
                return Err(ReconstructError::InvalidScale);
            }
        }
        Ok(Self { width, height, depth, std, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = self.index(x, y);
        self.valid[i].then(|| (self.depth[i], self.std[i]))
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64, std: f64) {
        assert!(depth > 0.0 && std >= 0.0);
        let i = self.index(x, y);
        self.depth[i] = depth;
        self.std[i] = std;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.valid[i] = false;
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Fraction of pixels valid here that are also valid in `other`.
    pub fn overlap_fraction(&self, other: &DepthMap) -> f64 {
        let own = self.valid_count();
        if own == 0 {
            return 0.0;
        }
        let both = self
            .valid
            .iter()
            .zip(&other.valid)
            .filter(|&(&a, &b)| a && b)
            .count();
        both as f64 / own as f64
    }

    pub fn scaled(&self, s: f64) -> DepthMap {
        assert!(s > 0.0);
        DepthMap {
            width: self.width,
            height: self.height,
            depth: self.depth.iter().map(|d| d * s).collect(),
            std: self.std.iter().map(|e| e * s).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Carries a depth map into the next frame: each pixel with a valid
/// depth and a valid flow match is lifted to 3-D, moved by the
/// relative pose, and reprojected. Pixels that leave the frame or the
/// positive-depth half space are dropped; collisions keep the nearest
/// surface; std grows by `DEPTH_STD_INFLATION`.
pub fn propagate_depth(
    prev: &DepthMap,
    pose: &PoseSE3,
    flow: &FlowField,
    k: &CameraIntrinsics,
) -> Result<DepthMap, ReconstructError> {
    if flow.width() != prev.width || flow.height() != prev.height {
        return Err(ReconstructError::MismatchedSizes);
    }
    let mut out = DepthMap::new(prev.width, prev.height);
    let k_inv = k.inverse_matrix();
    for y in 0..prev.height {
        for x in 0..prev.width {
            let Some((d, std)) = prev.get(x, y) else {
                continue;
            };
            if !flow.is_valid(x, y) {
                continue;
            }
            let ray = k_inv * Vector3::new(x as f64, y as f64, 1.0);
            let p2 = pose.transform(&(ray * d));
            let Some(pix) = k.project(&p2) else {
                continue;
            };
            let (u, v) = (pix.u.round(), pix.v.round());
            if u < 0.0 || v < 0.0 || u >= prev.width as f64 || v >= prev.height as f64 {
                continue;
            }
            let (ui, vi) = (u as usize, v as usize);
            let keep = match out.get(ui, vi) {
                Some((existing, _)) => p2.z < existing,
                None => true,
            };
            if keep {
                out.set(ui, vi, p2.z, std * DEPTH_STD_INFLATION);
            }
        }
    }
    Ok(out)
}

/// Information-weighted per-pixel fusion: weights 1/std^2, fused std
/// from the summed information. One-sided pixels are copied through.
pub fn fuse_depth_maps(a: &DepthMap, b: &DepthMap) -> Result<DepthMap, ReconstructError> {
    if a.width != b.width || a.height != b.height {
        return Err(ReconstructError::MismatchedSizes);
    }
    let mut out = DepthMap::new(a.width, a.height);
    for y in 0..a.height {
        for x in 0..a.width {
            match (a.get(x, y), b.get(x, y)) {
                (Some((da, sa)), Some((db, sb))) => {
                    let wa = 1.0 / (sa * sa).max(1e-24);
                    let wb = 1.0 / (sb * sb).max(1e-24);
                    let d = (wa * da + wb * db) / (wa + wb);
                    out.set(x, y, d, (1.0 / (wa + wb)).sqrt());
                }
                (Some((d, s)), None) | (None, Some((d, s))) => out.set(x, y, d, s),
                (None, None) => {}
            }
        }
    }
    Ok(out)
}
