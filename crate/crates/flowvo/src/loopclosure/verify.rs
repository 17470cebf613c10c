//! Geometric verification of a gated loop candidate.
//!
//! Runs dense flow with uncertainty between the two frames in both
//! directions, drops the pair if too little of the field survives the
//! consistency and confidence checks, then routes through the parallax
//! gate: enough parallax runs the epipolar estimator with the scale
//! recovered against the stored depth of the older frame, otherwise the
//! stored depth feeds resectioning directly. The result is a metric
//! relative-pose edge with an information matrix derived from inlier
//! residual statistics.

use nalgebra::Matrix6;

use crate::corners::{detect_corners, match_corners, CornerConfig};
use crate::epipolar::{
    pose_from_fundamental, ransac_mahalanobis, refine_pose_epipolar, Correspondence, RansacConfig,
};
use crate::flow::{
    build_cost_volume, extract_flow, fit_volume, forward_backward_filter, refine_subpixel,
    reliability_fraction, FlowField, COST_TO_SQ_DISTANCE,
};
use crate::geometry::{epipolar_line, point_line_euclidean, CameraIntrinsics, Pixel2, Point3, PoseSE3};
use crate::imageops::GrayImage;
use crate::reconstruct::{
    parallax_gate, pnp_pose, scale_from_depth_ratio, triangulate, DepthMap, GateDecision,
    PnpConfig,
};
use crate::stats;

use super::candidates::LoopCandidate;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Cost-volume search window, odd; caps matchable displacement.
    pub window: usize,
    /// Cost threshold for the information fit support.
    pub fit_threshold: f64,
    /// Forward-backward consistency tolerance in pixels.
    pub fb_tolerance: f64,
    /// Minimum information eigenvalue that counts a pixel as reliable.
    pub info_threshold: f64,
    /// Reject the pair when the reliable fraction falls below this.
    pub reliability_min: f64,
    /// Subsampling stride when turning flow into correspondences.
    pub sample_stride: usize,
    pub corner_search: i64,
    pub corner_min_score: f64,
    pub ransac: RansacConfig,
    pub pnp: PnpConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            window: 15,
            fit_threshold: 0.2,
            fb_tolerance: 0.5,
            info_threshold: 0.05,
            reliability_min: 0.20,
            sample_stride: 2,
            corner_search: 8,
            corner_min_score: 0.7,
            ransac: RansacConfig::default(),
            pnp: PnpConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum RejectReason {
    /// Too little of the flow field survived filtering.
    Unreliable { fraction: f64 },
    /// Flow was fine but no consistent geometry explained it.
    EstimationFailed { reason: String },
}

#[derive(Debug, Clone)]
pub struct LoopClosure {
    pub from: usize,
    pub to: usize,
    /// Measured X_from^-1 X_to, metric scale.
    pub relative: PoseSE3,
    /// Edge information over [translation, rotation].
    pub information: Matrix6<f64>,
    pub decision: GateDecision,
    pub reliability: f64,
    pub inlier_count: usize,
}

fn dense_flow(a: &GrayImage, b: &GrayImage, cfg: &VerifyConfig) -> Result<FlowField, RejectReason> {
    // Raw matching costs only: smoothing would shrink exactly the
    // differential flow structure the pose estimate hangs on, and the
    // consistency filter plus the sampler's robustness replace it as
    // the outlier defense.
    let vol = build_cost_volume(a, b, cfg.window)
        .map_err(|e| RejectReason::EstimationFailed { reason: e.to_string() })?;
    let mut flow = extract_flow(&vol);
    refine_subpixel(&vol, &mut flow);
    let infos = fit_volume(&vol, &flow, cfg.fit_threshold, COST_TO_SQ_DISTANCE);
    flow.set_infos(infos);
    Ok(flow)
}

fn flow_correspondences(flow: &FlowField, stride: usize) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for y in (0..flow.height()).step_by(stride) {
        for x in (0..flow.width()).step_by(stride) {
            if !flow.is_valid(x, y) {
                continue;
            }
            let f = flow.flow_at(x, y);
            let p = Pixel2::new(x as f64, y as f64);
            let q = Pixel2::new(x as f64 + f[0], y as f64 + f[1]);
            out.push(Correspondence::new(p, q, flow.info_at(x, y)));
        }
    }
    out
}

/// Diagonal information from inlier pixel residuals: bearing noise
/// sigma/f, translation additionally scaled by the median scene depth.
/// The pixel variance is floored at the quantization level so perfect
/// synthetic inputs do not produce singular weights.
fn edge_information(sigma_px_sq: f64, inliers: usize, focal: f64, depth: f64) -> Matrix6<f64> {
    let m = inliers.max(1) as f64;
    let var_angle = sigma_px_sq.max(0.01) / (focal * focal);
    let w_rot = m / var_angle;
    let w_trans = m / (var_angle * depth * depth);
    let mut info = Matrix6::zeros();
    for k in 0..3 {
        info[(k, k)] = w_trans;
        info[(k + 3, k + 3)] = w_rot;
    }
    info
}

pub fn verify_by_flow(
    candidate: &LoopCandidate,
    image_i: &GrayImage,
    image_j: &GrayImage,
    k: &CameraIntrinsics,
    depth_i: &DepthMap,
    cfg: &VerifyConfig,
) -> Result<LoopClosure, RejectReason> {
    assert_eq!(
        (image_i.width(), image_i.height()),
        (image_j.width(), image_j.height()),
        "loop frames must share dimensions"
    );
    let (w, h) = (image_i.width(), image_i.height());

    // Sparse corner tracks sample the parallax for the routing gate.
    let corners = detect_corners(image_i, &CornerConfig::default());
    let tracks = match_corners(image_i, image_j, &corners, cfg.corner_search, cfg.corner_min_score);
    let displacements: Vec<f64> = tracks.iter().map(|(a, b)| a.distance(b)).collect();

    let fwd = dense_flow(image_i, image_j, cfg)?;
    let bwd = dense_flow(image_j, image_i, cfg)?;
    let flow = forward_backward_filter(&fwd, &bwd, cfg.fb_tolerance);

    let reliability = reliability_fraction(&flow, cfg.info_threshold);
    if reliability < cfg.reliability_min {
        return Err(RejectReason::Unreliable { fraction: reliability });
    }

    let decision = parallax_gate(&displacements, &flow);
    let fail = |reason: String| RejectReason::EstimationFailed { reason };

    // Both branches estimate the motion of frame j relative to frame i
    // (points map from i's camera to j's); the graph edge wants the
    // camera-to-world relative X_i^-1 X_j, which is its inverse.
    let (mapping, sigma_px_sq, inlier_count, depth_med) = match decision {
        GateDecision::FullPipeline => {
            let matches = flow_correspondences(&flow, cfg.sample_stride);
            let result = ransac_mahalanobis(&matches, &cfg.ransac)
                .map_err(|e| fail(e.to_string()))?;
            let inliers: Vec<Correspondence> = matches
                .iter()
                .zip(&result.inliers)
                .filter_map(|(c, &keep)| keep.then_some(*c))
                .collect();
            let pose_unit =
                pose_from_fundamental(&result.f, &inliers, k, k).map_err(|e| fail(e.to_string()))?;
            // A free fundamental overfits shallow scenes; polishing on
            // the essential manifold restores the rotation it smeared
            // into the epipole.
            let pose_unit = refine_pose_epipolar(&pose_unit, &inliers, k, k, 25);

            // Unit-scale depth at frame i from the winning geometry.
            let points = triangulate(&pose_unit, k, k, &inliers);
            let mut unit_depth = DepthMap::new(w, h);
            let mut unit_depths = Vec::new();
            for (c, t) in inliers.iter().zip(&points) {
                if let Some(t) = t {
                    unit_depth.set(c.x.u as usize, c.x.v as usize, t.depth(), 1.0);
                    unit_depths.push(t.depth());
                }
            }
            let scale =
                scale_from_depth_ratio(depth_i, &unit_depth).map_err(|e| fail(e.to_string()))?;
            let metric =
                PoseSE3::new(pose_unit.rotation, pose_unit.translation * scale.s);

            let residuals: Vec<f64> = inliers
                .iter()
                .map(|c| {
                    let line = epipolar_line(result.f.matrix(), c.x);
                    point_line_euclidean(c.x_prime, &line).unwrap_or(cfg.ransac.inlier_threshold)
                })
                .collect();
            let var = stats::mean(&residuals.iter().map(|r| r * r).collect::<Vec<_>>())
                .unwrap_or(cfg.ransac.inlier_threshold.powi(2));
            let depth_med = stats::median(&unit_depths).unwrap_or(1.0) * scale.s;
            (metric, var, inliers.len(), depth_med)
        }
        GateDecision::PnPOnly => {
            let mut points = Vec::new();
            let mut pixels = Vec::new();
            for y in (0..h).step_by(cfg.sample_stride) {
                for x in (0..w).step_by(cfg.sample_stride) {
                    if !flow.is_valid(x, y) {
                        continue;
                    }
                    let Some((d, _)) = depth_i.get(x, y) else { continue };
                    let f = flow.flow_at(x, y);
                    points.push(Point3::new(k.ray(Pixel2::new(x as f64, y as f64)) * d));
                    pixels.push(Pixel2::new(x as f64 + f[0], y as f64 + f[1]));
                }
            }
            let pose = pnp_pose(&points, &pixels, k, &cfg.pnp).map_err(|e| fail(e.to_string()))?;

            let mut residuals = Vec::new();
            let mut depths = Vec::new();
            for (p, px) in points.iter().zip(&pixels) {
                let cam = pose.transform(&p.position);
                if let Some(proj) = k.project(&cam) {
                    let r = proj.distance(px);
                    if r < cfg.pnp.inlier_px {
                        residuals.push(r);
                        depths.push(p.position.z);
                    }
                }
            }
            if residuals.is_empty() {
                return Err(fail("no inliers after resectioning".into()));
            }
            let var = stats::mean(&residuals.iter().map(|r| r * r).collect::<Vec<_>>()).unwrap();
            let depth_med = stats::median(&depths).unwrap();
            (pose, var, residuals.len(), depth_med)
        }
    };

    let focal = 0.5 * (k.fx + k.fy);
    Ok(LoopClosure {
        from: candidate.i,
        to: candidate.j,
        relative: mapping.inverse(),
        information: edge_information(sigma_px_sq, inlier_count, focal, depth_med),
        decision,
        reliability,
        inlier_count,
    })
}
