//! Camera pose from 2-D/3-D correspondences: linear resectioning over
//! minimal six-point samples inside RANSAC, then damped Gauss-Newton on
//! the pixel reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Rotation3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{CameraIntrinsics, Pixel2, Point3, PoseSE3};

use super::ReconstructError;

#[derive(Debug, Clone, Copy)]
pub struct PnpConfig {
    pub ransac_iters: usize,
    /// Pixel reprojection error below which a point counts as an inlier.
    pub inlier_px: f64,
    pub refine_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for PnpConfig {
    fn default() -> Self {
        Self { ransac_iters: 100, inlier_px: 2.0, refine_iters: 10, confidence: 0.99, seed: 7 }
    }
}

/// Sorted-descending eigenvalues of the centered scatter matrix.
fn scatter_spectrum(points: &[Vector3<f64>]) -> [f64; 3] {
    let n = points.len() as f64;
    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    [ev[0].max(0.0), ev[1].max(0.0), ev[2].max(0.0)]
}

/// Collinear or coplanar sets leave the linear resectioning system with a
/// multi-dimensional null space, so both count as degenerate here.
fn is_degenerate_set(points: &[Vector3<f64>]) -> bool {
    let ev = scatter_spectrum(points);
    ev[0] <= 0.0 || ev[2] < ev[0] * 1e-12
}

/// Projects onto the nearest rotation; also returns the mean singular value.
fn nearest_rotation(m: &Matrix3<f64>) -> Option<(Matrix3<f64>, f64)> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let mut u_s = Matrix3::zeros();
    let mut v_s = Matrix3::zeros();
    for (k, &i) in idx.iter().enumerate() {
        u_s.set_column(k, &u.column(i));
        v_s.set_column(k, &v.column(i));
    }
    let mean_sigma = svd.singular_values.iter().sum::<f64>() / 3.0;
    if !(mean_sigma > 1e-300) {
        return None;
    }
    let d = (u_s * v_s.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    Some((u_s * correction * v_s.transpose(), mean_sigma))
}

/// Direct linear resectioning in K-normalized image coordinates. `rays` holds
/// the first two components of K^-1 x~ per pixel. Points are centered and
/// scaled before building the system; the recovered 3x4 matrix factors as
/// alpha [R | t] with the sign of alpha fixed by det of the left 3x3 block.
fn linear_pnp(points: &[Vector3<f64>], rays: &[[f64; 2]]) -> Option<PoseSE3> {
    let n = points.len();
    debug_assert!(n >= 6 && rays.len() == n);

    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    if !(mean_dist > 0.0) {
        return None;
    }
    let s = 3f64.sqrt() / mean_dist;

    let mut rows = Vec::with_capacity(2 * n * 12);
    for (p, uv) in points.iter().zip(rays) {
        let x = (p - centroid) * s;
        let (u, v) = (uv[0], uv[1]);
        rows.extend_from_slice(&[
            x.x, x.y, x.z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x.x, -u * x.y, -u * x.z, -u,
        ]);
        rows.extend_from_slice(&[
            0.0, 0.0, 0.0, 0.0, x.x, x.y, x.z, 1.0, -v * x.x, -v * x.y, -v * x.z, -v,
        ]);
    }
    let a = DMatrix::from_row_slice(2 * n, 12, &rows);
    let svd = a.svd(true, true);
    let v_t = svd.v_t.as_ref()?;
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap()
    });
    let largest = svd.singular_values[order[0]];
    if !(largest > 0.0) || svd.singular_values[order[10]] < largest * 1e-9 {
        return None;
    }
    let p_vec = v_t.row(order[11]);

    let p_norm = Matrix3x4::from_row_slice(p_vec.transpose().as_slice());
    // Undo the 3-D normalization: X_norm = s (X - c).
    let t_norm = Matrix4::new(
        s, 0.0, 0.0, -s * centroid.x,
        0.0, s, 0.0, -s * centroid.y,
        0.0, 0.0, s, -s * centroid.z,
        0.0, 0.0, 0.0, 1.0,
    );
    let p_mat = p_norm * t_norm;

    let m = p_mat.fixed_view::<3, 3>(0, 0).into_owned();
    let p4 = Vector3::new(p_mat[(0, 3)], p_mat[(1, 3)], p_mat[(2, 3)]);
    let det = m.determinant();
    if !det.is_finite() || det == 0.0 {
        return None;
    }
    let sign = det.signum();
    let (r, mean_sigma) = nearest_rotation(&(m * sign))?;
    let t = p4 * (sign / mean_sigma);
    if !t.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(PoseSE3::from_parts_projected(r, t))
}

/// Squared-pixel residuals; points at or behind the camera get a large
/// constant residual so the optimizer is pushed back to valid poses.
fn fill_residuals(
    pose: &PoseSE3,
    k: &CameraIntrinsics,
    points: &[Vector3<f64>],
    pixels: &[Pixel2],
    out: &mut Vec<f64>,
) {
    out.clear();
    for (x, px) in points.iter().zip(pixels) {
        match k.project(&pose.transform(x)) {
            Some(proj) => {
                out.push(proj.u - px.u);
                out.push(proj.v - px.v);
            }
            None => {
                out.push(1e4);
                out.push(1e4);
            }
        }
    }
}

fn cost_of(pose: &PoseSE3, k: &CameraIntrinsics, points: &[Vector3<f64>], pixels: &[Pixel2]) -> f64 {
    let mut r = Vec::new();
    fill_residuals(pose, k, points, pixels, &mut r);
    r.iter().map(|v| v * v).sum()
}

fn apply_step(pose: &PoseSE3, delta: &DVector<f64>) -> PoseSE3 {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    PoseSE3::new(Rotation3::new(w) * pose.rotation, pose.translation + dt)
}

/// Gauss-Newton on the reprojection error with a left-multiplicative
/// rotation increment, central-difference Jacobian, and step halving.
fn refine_pose(
    pose0: PoseSE3,
    k: &CameraIntrinsics,
    points: &[Vector3<f64>],
    pixels: &[Pixel2],
    iters: usize,
) -> PoseSE3 {
    let n2 = 2 * points.len();
    let mut pose = pose0;
    let mut cost = cost_of(&pose, k, points, pixels);
    let eps = 1e-6;
    let mut r = Vec::with_capacity(n2);
    let mut r_plus = Vec::with_capacity(n2);
    let mut r_minus = Vec::with_capacity(n2);

    for _ in 0..iters {
        if cost < 1e-24 {
            break;
        }
        fill_residuals(&pose, k, points, pixels, &mut r);
        let mut j = DMatrix::zeros(n2, 6);
        for col in 0..6 {
            let mut step = DVector::zeros(6);
            step[col] = eps;
            fill_residuals(&apply_step(&pose, &step), k, points, pixels, &mut r_plus);
            step[col] = -eps;
            fill_residuals(&apply_step(&pose, &step), k, points, pixels, &mut r_minus);
            for row in 0..n2 {
                j[(row, col)] = (r_plus[row] - r_minus[row]) / (2.0 * eps);
            }
        }
        let jt = j.transpose();
        let mut h = &jt * &j;
        for d in 0..6 {
            h[(d, d)] += 1e-10;
        }
        let g = &jt * DVector::from_column_slice(&r);
        let Some(delta) = h.lu().solve(&(-g)) else {
            break;
        };
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..8 {
            let candidate = apply_step(&pose, &(&delta * scale));
            let c = cost_of(&candidate, k, points, pixels);
            if c < cost {
                pose = candidate;
                cost = c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    pose
}

fn sample_distinct(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k {
        let i = rng.gen_range(0..n);
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

/// Estimates the camera pose (world-to-camera, metric when the points are)
/// from at least six 2-D/3-D correspondences. RANSAC over six-point samples
/// guards against gross pixel outliers; the consensus pose is refit on all
/// inliers and polished by reprojection refinement.
pub fn pnp_pose(
    points3d: &[Point3],
    pixels: &[Pixel2],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PoseSE3, ReconstructError> {
    if points3d.len() != pixels.len() {
        return Err(ReconstructError::MismatchedSizes);
    }
    let n = points3d.len();
    if n < 6 {
        return Err(ReconstructError::InsufficientPoints { got: n, need: 6 });
    }
    let positions: Vec<Vector3<f64>> = points3d.iter().map(|p| p.position).collect();
    if is_degenerate_set(&positions) {
        return Err(ReconstructError::DegenerateConfiguration);
    }
    let rays: Vec<[f64; 2]> = pixels
        .iter()
        .map(|p| {
            let r = k.ray(*p);
            [r.x, r.y]
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, PoseSE3, Vec<bool>)> = None;
    for iteration in 0..cfg.ransac_iters.max(1) {
        let idx = sample_distinct(&mut rng, 6, n);
        let sample_points: Vec<Vector3<f64>> = idx.iter().map(|&i| positions[i]).collect();
        if is_degenerate_set(&sample_points) {
            continue;
        }
        let sample_rays: Vec<[f64; 2]> = idx.iter().map(|&i| rays[i]).collect();
        let Some(candidate) = linear_pnp(&sample_points, &sample_rays) else {
            continue;
        };
        let mask: Vec<bool> = positions
            .iter()
            .zip(pixels)
            .map(|(x, px)| match k.project(&candidate.transform(x)) {
                Some(proj) => proj.distance(px) < cfg.inlier_px,
                None => false,
            })
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        let improves = match &best {
            Some((best_count, _, _)) => count > *best_count,
            None => count > 0,
        };
        if improves {
            best = Some((count, candidate, mask));
        }
        if let Some((best_count, _, _)) = &best {
            if *best_count >= 6 {
                let eps = *best_count as f64 / n as f64;
                let p_all = eps.powi(6);
                if p_all >= 1.0 {
                    break;
                }
                let needed = (1.0 - cfg.confidence).ln() / (1.0 - p_all).ln();
                if (iteration + 1) as f64 >= needed {
                    break;
                }
            }
        }
    }

    let Some((count, candidate, mask)) = best else {
        return Err(ReconstructError::NoConsensus);
    };
    if count < 6 {
        return Err(ReconstructError::NoConsensus);
    }
    let in_points: Vec<Vector3<f64>> = mask
        .iter()
        .zip(&positions)
        .filter_map(|(&keep, p)| keep.then_some(*p))
        .collect();
    let in_rays: Vec<[f64; 2]> = mask
        .iter()
        .zip(&rays)
        .filter_map(|(&keep, r)| keep.then_some(*r))
        .collect();
    let in_pixels: Vec<Pixel2> = mask
        .iter()
        .zip(pixels)
        .filter_map(|(&keep, p)| keep.then_some(*p))
        .collect();

    let refit = if !is_degenerate_set(&in_points) {
        linear_pnp(&in_points, &in_rays).unwrap_or(candidate)
    } else {
        candidate
    };
    Ok(refine_pose(refit, k, &in_points, &in_pixels, cfg.refine_iters))
}
