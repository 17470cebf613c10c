//! Dense optical flow with per-pixel bivariate uncertainty.

pub mod cost;
pub mod fit;
pub mod io;

use thiserror::Error;

use crate::uncertainty::InfoMatrix2;

pub use cost::{
    build_cost_volume, extract_flow, inject_epipolar_cost, refine_subpixel, regularize, CostVolume,
};
pub use fit::{fit_information_matrix, fit_volume, COST_TO_SQ_DISTANCE};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    MismatchedSizes { a: (usize, usize), b: (usize, usize) },
    #[error("window must be odd and >= 3, got {0}")]
    InvalidWindow(usize),
    #[error("singular information matrix on valid pixel ({x}, {y})")]
    SingularInformation { x: usize, y: usize },
}

/// Per-pixel displacement field with information matrices and validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    flow: Vec<[f64; 2]>,
    info: Vec<InfoMatrix2>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn from_parts(width: usize, height: usize, flow: Vec<[f64; 2]>) -> Self {
        assert_eq!(flow.len(), width * height);
        Self {
            width,
            height,
            flow,
            info: vec![InfoMatrix2::max_uncertainty(); width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn flow_at(&self, x: usize, y: usize) -> [f64; 2] {
        self.flow[y * self.width + x]
    }

    #[inline]
    pub fn info_at(&self, x: usize, y: usize) -> InfoMatrix2 {
        self.info[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set_flow(&mut self, x: usize, y: usize, f: [f64; 2]) {
        self.flow[y * self.width + x] = f;
    }

    pub fn set_info(&mut self, x: usize, y: usize, info: InfoMatrix2) {
        self.info[y * self.width + x] = info;
    }

    pub fn set_infos(&mut self, infos: Vec<InfoMatrix2>) {
        assert_eq!(infos.len(), self.info.len());
        self.info = infos;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.valid[i] = false;
        self.info[i] = InfoMatrix2::max_uncertainty();
    }

    /// Clears validity without touching the stored information values;
    /// used when deserializing masks that already carry their info.
    pub fn invalidate_keep_info(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    /// Magnitudes of valid flow vectors.
    pub fn valid_magnitudes(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.flow.len() {
            if self.valid[i] {
                out.push(self.flow[i][0].hypot(self.flow[i][1]));
            }
        }
        out
    }
}

/// Invalidates pixels whose backward flow fails to cancel the forward
/// flow within `tol` pixels; invalidated pixels get the sentinel.
pub fn forward_backward_filter(fwd: &FlowField, bwd: &FlowField, tol: f64) -> FlowField {
    assert_eq!((fwd.width, fwd.height), (bwd.width, bwd.height));
    let mut out = fwd.clone();
    for y in 0..fwd.height {
        for x in 0..fwd.width {
            if !fwd.is_valid(x, y) {
                out.invalidate(x, y);
                continue;
            }
            let f = fwd.flow_at(x, y);
            let qx = (x as f64 + f[0]).round();
            let qy = (y as f64 + f[1]).round();
            if qx < 0.0 || qy < 0.0 || qx >= fwd.width as f64 || qy >= fwd.height as f64 {
                out.invalidate(x, y);
                continue;
            }
            let b = bwd.flow_at(qx as usize, qy as usize);
            let err = (f[0] + b[0]).hypot(f[1] + b[1]);
            if err > tol {
                out.invalidate(x, y);
            }
        }
    }
    out
}

/// Resamples the field to `factor` times its size: flow vectors scale by
/// `factor`, covariances by `factor^2` (information by 1/factor^2).
pub fn rescale_uncertainty(field: &FlowField, factor: f64) -> Result<FlowField, FlowError> {
    assert!(factor > 0.0);
    let w = ((field.width as f64 * factor).round() as usize).max(1);
    let h = ((field.height as f64 * factor).round() as usize).max(1);
    let info_scale = 1.0 / (factor * factor);
    let mut flow = Vec::with_capacity(w * h);
    let mut info = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let sx = ((x as f64 / factor).floor() as usize).min(field.width - 1);
            let sy = ((y as f64 / factor).floor() as usize).min(field.height - 1);
            let f = field.flow_at(sx, sy);
            let src_info = field.info_at(sx, sy);
            if field.is_valid(sx, sy) {
                let det = src_info.det();
                if det <= 0.0 || !det.is_finite() {
                    return Err(FlowError::SingularInformation { x: sx, y: sy });
                }
            }
            flow.push([f[0] * factor, f[1] * factor]);
            info.push(src_info.scaled(info_scale));
            valid.push(field.is_valid(sx, sy));
        }
    }
    Ok(FlowField { width: w, height: h, flow, info, valid })
}

/// Fraction of pixels whose smallest information eigenvalue exceeds the
/// threshold, i.e. whose uncertainty is below the matching bound.
pub fn reliability_fraction(field: &FlowField, info_threshold: f64) -> f64 {
    if field.info.is_empty() {
        return 0.0;
    }
    let n = field
        .info
        .iter()
        .filter(|y| y.min_eigenvalue() > info_threshold)
        .count();
    n as f64 / field.info.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_field(w: usize, h: usize, f: [f64; 2]) -> FlowField {
        FlowField::from_parts(w, h, vec![f; w * h])
    }

    #[test]
    fn forward_backward_perfect_consistency() {
        let fwd = constant_field(8, 6, [2.0, 1.0]);
        let bwd = constant_field(8, 6, [-2.0, -1.0]);
        let out = forward_backward_filter(&fwd, &bwd, 0.5);
        // Pixels whose forward target stays in frame remain valid.
        assert!(out.is_valid(2, 2));
        assert!(out.is_valid(5, 4));
        // Forward target out of frame invalidates.
        assert!(!out.is_valid(7, 5));
    }

    #[test]
    fn forward_backward_gross_inconsistency() {
        let fwd = constant_field(8, 6, [2.0, 0.0]);
        let bwd = constant_field(8, 6, [0.0, 0.0]);
        let out = forward_backward_filter(&fwd, &bwd, 0.5);
        for y in 0..6 {
            for x in 0..5 {
                assert!(!out.is_valid(x, y));
                assert!(out.info_at(x, y).is_sentinel());
            }
        }
    }

    #[test]
    fn forward_backward_occlusion_strip() {
        // Occluder: columns 10..14 in image 2 cover new content, so the
        // backward flow there contradicts the forward motion.
        let (w, h) = (20, 8);
        let fwd = constant_field(w, h, [2.0, 0.0]);
        let mut bwd = constant_field(w, h, [-2.0, 0.0]);
        for y in 0..h {
            for x in 10..14 {
                bwd.set_flow(x, y, [5.0, 0.0]);
            }
        }
        let out = forward_backward_filter(&fwd, &bwd, 0.5);
        for y in 0..h {
            for x in 0..w - 2 {
                let lands_in_occluder = (10..14).contains(&(x + 2));
                assert_eq!(out.is_valid(x, y), !lands_in_occluder, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn rescale_identity() {
        let mut field = constant_field(6, 4, [1.0, -1.0]);
        field.set_info(3, 2, InfoMatrix2::new(2.0, 0.1, 1.0));
        let out = rescale_uncertainty(&field, 1.0).unwrap();
        assert_eq!(out, field);
    }

    #[test]
    fn rescale_by_three_divides_information_by_nine() {
        let mut field = constant_field(4, 4, [1.0, 0.0]);
        for y in 0..4 {
            for x in 0..4 {
                field.set_info(x, y, InfoMatrix2::identity());
            }
        }
        let out = rescale_uncertainty(&field, 3.0).unwrap();
        assert_eq!((out.width(), out.height()), (12, 12));
        let y = out.info_at(6, 6);
        assert_relative_eq!(y.yxx, 1.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(y.yyy, 1.0 / 9.0, epsilon = 1e-15);
        assert_eq!(out.flow_at(6, 6), [3.0, 0.0]);
    }

    #[test]
    fn rescale_covariance_hand_case() {
        let mut field = constant_field(2, 2, [0.0, 0.0]);
        for y in 0..2 {
            for x in 0..2 {
                field.set_info(x, y, InfoMatrix2::new(4.0, 0.0, 1.0));
            }
        }
        let out = rescale_uncertainty(&field, 2.0).unwrap();
        let y = out.info_at(1, 1);
        assert_relative_eq!(y.yxx, 1.0, epsilon = 1e-15);
        assert_relative_eq!(y.yyy, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn rescale_round_trip() {
        let mut field = constant_field(9, 9, [1.5, -0.5]);
        for y in 0..9 {
            for x in 0..9 {
                field.set_info(x, y, InfoMatrix2::new(0.5 + x as f64, 0.1, 0.3 + y as f64));
            }
        }
        let up = rescale_uncertainty(&field, 3.0).unwrap();
        let back = rescale_uncertainty(&up, 1.0 / 3.0).unwrap();
        assert_eq!((back.width(), back.height()), (9, 9));
        for y in 0..9 {
            for x in 0..9 {
                let a = field.info_at(x, y);
                let b = back.info_at(x, y);
                assert_relative_eq!(a.yxx, b.yxx, epsilon = 1e-6);
                assert_relative_eq!(a.yxy, b.yxy, epsilon = 1e-6);
                assert_relative_eq!(a.yyy, b.yyy, epsilon = 1e-6);
                let fa = field.flow_at(x, y);
                let fb = back.flow_at(x, y);
                assert_relative_eq!(fa[0], fb[0], epsilon = 1e-12);
                assert_relative_eq!(fa[1], fb[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rescale_rejects_singular_information_on_valid_pixels() {
        let mut field = constant_field(2, 2, [0.0, 0.0]);
        field.set_info(0, 0, InfoMatrix2::new(1.0, 1.0, 1.0));
        assert!(matches!(
            rescale_uncertainty(&field, 2.0),
            Err(FlowError::SingularInformation { x: 0, y: 0 })
        ));
        // The same matrix on an invalidated pixel passes through.
        field.invalidate(0, 0);
        assert!(rescale_uncertainty(&field, 2.0).is_ok());
    }

    #[test]
    fn reliability_counts_thresholded_eigenvalues() {
        let mut field = constant_field(4, 1, [0.0, 0.0]);
        field.set_info(0, 0, InfoMatrix2::identity());
        field.set_info(1, 0, InfoMatrix2::identity());
        field.set_info(2, 0, InfoMatrix2::max_uncertainty());
        field.set_info(3, 0, InfoMatrix2::max_uncertainty());
        assert_relative_eq!(reliability_fraction(&field, 0.1), 0.5);

        let all_good = {
            let mut f = constant_field(3, 3, [0.0, 0.0]);
            for y in 0..3 {
                for x in 0..3 {
                    f.set_info(x, y, InfoMatrix2::new(5.0, 0.0, 5.0));
                }
            }
            f
        };
        assert_relative_eq!(reliability_fraction(&all_good, 0.1), 1.0);
        let all_bad = constant_field(3, 3, [0.0, 0.0]);
        assert_relative_eq!(reliability_fraction(&all_bad, 0.1), 0.0);
    }
}
