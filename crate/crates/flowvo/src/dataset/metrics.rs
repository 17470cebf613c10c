//! Trajectory evaluation.
//!
//! Segment errors follow the odometry-benchmark protocol: for every start
//! frame on a fixed stride and every segment length, compare the relative
//! motion of estimate and ground truth over the segment and normalize by the
//! nominal length. The scale-drift report exploits forward/reverse symmetry:
//! running a sequence forwards and mirrored backwards should produce equal
//! step magnitudes, so the signed difference isolates scale drift from all
//! other error sources.

use crate::geometry::PoseSE3;
use crate::stats;

use super::DatasetError;

pub const DEFAULT_SEGMENT_LENGTHS: [f64; 8] =
    [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

const START_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub first_frame: usize,
    pub length: f64,
    /// Rotation error in degrees per meter of nominal segment length.
    pub rot_deg_per_m: f64,
    /// Translation error as a percentage of nominal segment length.
    pub trans_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub rot_deg_per_m: f64,
    pub trans_percent: f64,
    pub segments: Vec<SegmentError>,
}

fn cumulative_distance(poses: &[PoseSE3]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    dist.push(0.0);
    for w in poses.windows(2) {
        acc += (w[1].translation - w[0].translation).norm();
        dist.push(acc);
    }
    dist
}

fn frame_after_distance(dist: &[f64], first: usize, length: f64) -> Option<usize> {
    (first + 1..dist.len()).find(|&j| dist[j] - dist[first] >= length)
}

/// Compares an estimated trajectory against ground truth. Both are
/// camera-to-world pose lists of equal length.
pub fn evaluate_trajectory(
    estimate: &[PoseSE3],
    ground_truth: &[PoseSE3],
    lengths: &[f64],
) -> Result<TrajectoryMetrics, DatasetError> {
    if estimate.len() != ground_truth.len() {
        return Err(DatasetError::LengthMismatch(format!(
            "estimate has {} poses, ground truth has {}",
            estimate.len(),
            ground_truth.len()
        )));
    }
    if estimate.len() < 2 {
        return Err(DatasetError::LengthMismatch(
            "need at least two poses to evaluate".into(),
        ));
    }

    let dist = cumulative_distance(ground_truth);
    let mut segments = Vec::new();

    for first in (0..ground_truth.len()).step_by(START_STRIDE) {
        for &length in lengths {
            let Some(last) = frame_after_distance(&dist, first, length) else {
                continue;
            };
            let gt_rel = ground_truth[first].inverse().compose(&ground_truth[last]);
            let est_rel = estimate[first].inverse().compose(&estimate[last]);
            let error = gt_rel.inverse().compose(&est_rel);

            segments.push(SegmentError {
                first_frame: first,
                length,
                rot_deg_per_m: error.rotation_angle().to_degrees() / length,
                trans_percent: 100.0 * error.translation.norm() / length,
            });
        }
    }

    if segments.is_empty() {
        return Err(DatasetError::LengthMismatch(format!(
            "trajectory covers {:.1} units, shorter than the smallest segment length {:.1}",
            dist.last().unwrap(),
            lengths.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }

    let rot = stats::mean(&segments.iter().map(|s| s.rot_deg_per_m).collect::<Vec<_>>()).unwrap();
    let trans =
        stats::mean(&segments.iter().map(|s| s.trans_percent).collect::<Vec<_>>()).unwrap();
    Ok(TrajectoryMetrics { rot_deg_per_m: rot, trans_percent: trans, segments })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDriftReport {
    /// Step magnitudes of the forward half, one per frame transition.
    pub forward_magnitude: Vec<f64>,
    /// Matching step magnitudes of the reversed half, aligned to forward indices.
    pub reverse_magnitude: Vec<f64>,
    /// 100 * (reverse - forward) / forward, zero where flagged.
    pub difference_percent: Vec<f64>,
    /// True where the forward step was too small to divide by.
    pub flagged: Vec<bool>,
}

/// Appends the reversed pose list, dropping the duplicated turning point:
/// f0..f(M-1) becomes f0..f(M-1), f(M-2)..f0, total 2M-1 poses.
pub fn mirror_sequence(forward: &[PoseSE3]) -> Vec<PoseSE3> {
    let mut out = forward.to_vec();
    for pose in forward.iter().rev().skip(1) {
        out.push(*pose);
    }
    out
}

/// Splits a mirrored trajectory estimate at its midpoint and compares matched
/// forward/reverse step magnitudes. The input must be the output of running
/// odometry on a mirrored sequence, hence odd length.
pub fn scale_drift_report(estimate: &[PoseSE3]) -> Result<ScaleDriftReport, DatasetError> {
    let n = estimate.len();
    if n < 3 || n % 2 == 0 {
        return Err(DatasetError::LengthMismatch(format!(
            "mirrored estimate must have odd length >= 3, got {n}"
        )));
    }
    let steps: Vec<f64> = estimate
        .windows(2)
        .map(|w| (w[1].translation - w[0].translation).norm())
        .collect();
    let half = (n - 1) / 2;
    let forward: Vec<f64> = steps[..half].to_vec();
    // Forward step k covers the same ground as reverse step n-2-k.
    let reverse: Vec<f64> = (0..half).map(|k| steps[n - 2 - k]).collect();

    let floor = (0.05 * stats::median(&forward).unwrap()).max(1e-15);
    let mut difference = Vec::with_capacity(half);
    let mut flagged = Vec::with_capacity(half);
    for k in 0..half {
        if forward[k] < floor {
            difference.push(0.0);
            flagged.push(true);
        } else {
            difference.push(100.0 * (reverse[k] - forward[k]) / forward[k]);
            flagged.push(false);
        }
    }
    Ok(ScaleDriftReport {
        forward_magnitude: forward,
        reverse_magnitude: reverse,
        difference_percent: difference,
        flagged,
    })
}
