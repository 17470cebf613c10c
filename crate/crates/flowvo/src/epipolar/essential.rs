//! Essential matrix from calibrated fundamental estimates, and
//! relative pose extraction with the cheirality test.

use nalgebra::{Matrix3, Matrix4, Rotation3, RowVector4, Vector3};

use super::{Correspondence, EpipolarError, FundamentalMatrix};
use crate::geometry::{CameraIntrinsics, PoseSE3};

/// Calibrated epipolar matrix with singular values (s, s, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix {
    m: Matrix3<f64>,
}

impl EssentialMatrix {
    /// Projects onto the essential manifold: the two leading singular
    /// values are replaced by their mean, the smallest is zeroed.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, EpipolarError> {
        if m.norm() < 1e-12 || !m.norm().is_finite() {
            return Err(EpipolarError::DegenerateEssential);
        }
        let svd = m.svd(true, true);
        let mut vals = svd.singular_values;
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        let s = 0.5 * (vals[idx[0]] + vals[idx[1]]);
        vals[idx[0]] = s;
        vals[idx[1]] = s;
        vals[idx[2]] = 0.0;
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        Ok(Self { m: u * Matrix3::from_diagonal(&vals) * vt })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }
}

/// E = K'^T F K, projected onto the essential manifold. The input must
/// already be rank 2; refinement is responsible for that.
pub fn essential_from_fundamental(
    f: &FundamentalMatrix,
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
) -> Result<EssentialMatrix, EpipolarError> {
    let ratio = f.rank_ratio();
    if ratio > 1e-6 {
        return Err(EpipolarError::NotRankTwo(ratio));
    }
    EssentialMatrix::from_matrix(k_prime.matrix().transpose() * f.matrix() * k.matrix())
}

/// Linear two-ray triangulation in normalized camera coordinates with
/// cameras [I|0] and [R|t]. None when the homogeneous solution has a
/// vanishing scale.
fn triangulate_normalized(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let p2 = {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        m
    };
    let row = |i: usize| p2.row(i).into_owned();
    let mut a = Matrix4::zeros();
    a.set_row(0, &RowVector4::new(-1.0, 0.0, x1.x, 0.0));
    a.set_row(1, &RowVector4::new(0.0, -1.0, x1.y, 0.0));
    a.set_row(2, &(row(2) * x2.x - row(0)));
    a.set_row(3, &(row(2) * x2.y - row(1)));
    let svd = a.svd(false, true);
    let sv = svd.singular_values;
    let mut min_i = 0;
    for i in 1..4 {
        if sv[i] < sv[min_i] {
            min_i = i;
        }
    }
    let vt = svd.v_t.expect("requested");
    let h = vt.row(min_i);
    if h[3].abs() < 1e-12 {
        return None;
    }
    Some(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Relative pose (X2 = R X1 + t, unit baseline) from an essential
/// matrix. Of the four algebraic candidates, the one placing the most
/// triangulated matches in front of both cameras wins; a tie or an
/// empty front set is reported as ambiguous.
pub fn decompose_essential(
    e: &EssentialMatrix,
    matches: &[Correspondence],
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
) -> Result<PoseSE3, EpipolarError> {
    if e.m.norm() < 1e-12 {
        return Err(EpipolarError::DegenerateEssential);
    }
    let svd = e.m.svd(true, true);
    let vals = svd.singular_values;
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let u_raw = svd.u.expect("requested");
    let vt_raw = svd.v_t.expect("requested");
    let mut u = Matrix3::zeros();
    let mut v = Matrix3::zeros();
    for (col, &i) in idx.iter().enumerate() {
        u.set_column(col, &u_raw.column(i));
        v.set_column(col, &vt_raw.row(i).transpose());
    }
    if u.determinant() < 0.0 {
        u.set_column(2, &(-u.column(2)));
    }
    if v.determinant() < 0.0 {
        v.set_column(2, &(-v.column(2)));
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v.transpose();
    let r2 = u * w.transpose() * v.transpose();
    let t = u.column(2).into_owned();

    let k_inv = k.inverse_matrix();
    let kp_inv = k_prime.inverse_matrix();
    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = matches
        .iter()
        .map(|c| (k_inv * c.x.homogeneous(), kp_inv * c.x_prime.homogeneous()))
        .collect();

    let mut best: Option<(usize, Rotation3<f64>, Vector3<f64>)> = None;
    let mut tie = false;
    for (r, tv) in [(r1, t), (r1, -t), (r2, t), (r2, -t)] {
        let mut front = 0usize;
        for (x1, x2) in &rays {
            let Some(p) = triangulate_normalized(&r, &tv, x1, x2) else {
                continue;
            };
            let p2 = r * p + tv;
            if p.z > 0.0 && p2.z > 0.0 {
                front += 1;
            }
        }
        match &best {
            Some((count, _, _)) if front == *count => tie = true,
            Some((count, _, _)) if front > *count => {
                best = Some((front, Rotation3::from_matrix_unchecked(r), tv));
                tie = false;
            }
            None => {
                best = Some((front, Rotation3::from_matrix_unchecked(r), tv));
                tie = false;
            }
            _ => {}
        }
    }
    let (count, rotation, translation) = best.expect("four candidates evaluated");
    if count == 0 || tie {
        return Err(EpipolarError::CheiralityAmbiguous);
    }
    Ok(PoseSE3::new(rotation, translation.normalize()))
}

/// Convenience for tests and diagnostics: decompose using the same
/// pixel matches that produced the estimate.
pub fn pose_from_fundamental(
    f: &FundamentalMatrix,
    matches: &[Correspondence],
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
) -> Result<PoseSE3, EpipolarError> {
    let e = essential_from_fundamental(f, k, k_prime)?;
    decompose_essential(&e, matches, k, k_prime)
}

fn cross_matrix(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Signed per-match epipolar residuals against F(R, t), whitened by each
/// match's information matrix: the signed minimum Mahalanobis distance
/// from x' to its epipolar line. Identity information reduces this to
/// the point-line pixel distance. None when a line degenerates.
fn whitened_residuals(
    rotation: &Rotation3<f64>,
    translation: &Vector3<f64>,
    matches: &[Correspondence],
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
) -> Option<Vec<f64>> {
    let f = k_prime.inverse_matrix().transpose()
        * cross_matrix(translation)
        * rotation.matrix()
        * k.inverse_matrix();
    matches
        .iter()
        .map(|c| {
            let alg = (f * c.x.homogeneous()).dot(&c.x_prime.homogeneous());
            super::weights::mahalanobis_weight(&f, c.x, &c.info).ok().map(|w| w * alg)
        })
        .collect()
}

/// Huber weights on self-scaled residuals: unit inside one robust
/// standard deviation (1.4826 MAD), shrinking as 1/|r| outside. The
/// cost is the weighted square sum with the weights frozen, so one
/// LM accept test compares like against like.
fn huber_weights(res: &[f64]) -> (Vec<f64>, f64) {
    let mags: Vec<f64> = res.iter().map(|r| r.abs()).collect();
    let scale = (1.4826 * crate::stats::median(&mags).unwrap_or(0.0)).max(1e-12);
    let weights: Vec<f64> = res
        .iter()
        .map(|r| if r.abs() <= scale { 1.0 } else { scale / r.abs() })
        .collect();
    let cost = res.iter().zip(&weights).map(|(r, w)| w * r * r).sum();
    (weights, cost)
}

/// Levenberg-Marquardt polish of a decomposed pose on the essential
/// manifold: five parameters, the rotation tangent and the tangent of
/// the unit translation sphere, minimizing Huber-robustified whitened
/// epipolar residuals. Unlike a free fundamental fit this cannot spend
/// surplus degrees of freedom on noise, which matters for shallow
/// scenes; the robust loss keeps mismatched pixels that slipped past
/// filtering from steering the valley. The translation stays unit norm.
pub fn refine_pose_epipolar(
    pose: &PoseSE3,
    matches: &[Correspondence],
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
    iterations: usize,
) -> PoseSE3 {
    use nalgebra::{DMatrix, DVector, Matrix5, Vector5};

    if matches.len() < 6 || pose.translation.norm() < 1e-12 {
        return *pose;
    }
    let apply = |rot: &Rotation3<f64>, t: &Vector3<f64>, p: &Vector5<f64>| {
        let rot2 = rot * Rotation3::new(Vector3::new(p[0], p[1], p[2]));
        // Tangent basis of the sphere at t keeps the step off the scale
        // direction.
        let b1 = t.cross(&if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() }).normalize();
        let b2 = t.cross(&b1).normalize();
        let t2 = (t + b1 * p[3] + b2 * p[4]).normalize();
        (rot2, t2)
    };

    let mut rot = pose.rotation;
    let mut t = pose.translation.normalize();
    let Some(mut res) = whitened_residuals(&rot, &t, matches, k, k_prime) else {
        return *pose;
    };
    let mut lambda = 1e-6;
    const EPS: f64 = 1e-7;

    for _ in 0..iterations {
        // Weights refreeze each outer iteration so the robust loss
        // tracks the shrinking residuals without breaking the accept
        // comparison inside it.
        let (weights, cost) = huber_weights(&res);
        let sqw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let n = res.len();
        let mut jac = DMatrix::<f64>::zeros(n, 5);
        let mut ok = true;
        for col in 0..5 {
            let mut dp = Vector5::zeros();
            dp[col] = EPS;
            let (rp, tp) = apply(&rot, &t, &dp);
            dp[col] = -EPS;
            let (rm, tm) = apply(&rot, &t, &dp);
            let (Some(fp), Some(fm)) = (
                whitened_residuals(&rp, &tp, matches, k, k_prime),
                whitened_residuals(&rm, &tm, matches, k, k_prime),
            ) else {
                ok = false;
                break;
            };
            for i in 0..n {
                jac[(i, col)] = sqw[i] * (fp[i] - fm[i]) / (2.0 * EPS);
            }
        }
        if !ok {
            break;
        }
        let wres = DVector::from_fn(n, |i, _| sqw[i] * res[i]);
        let jt = jac.transpose();
        let h = &jt * &jac;
        let g = jt * wres;
        let mut damped = Matrix5::zeros();
        for i in 0..5 {
            for j in 0..5 {
                damped[(i, j)] = h[(i, j)];
            }
            damped[(i, i)] += lambda * h[(i, i)] + 1e-15;
        }
        let rhs = nalgebra::Vector5::from_fn(|i, _| -g[i]);
        let Some(step) = damped.lu().solve(&rhs) else { break };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let (rot_new, t_new) = apply(&rot, &t, &step);
        let Some(res_new) = whitened_residuals(&rot_new, &t_new, matches, k, k_prime) else {
            break;
        };
        let cost_new = res_new.iter().zip(&weights).map(|(r, w)| w * r * r).sum::<f64>();
        if cost_new < cost {
            let drop = cost - cost_new;
            rot = rot_new;
            t = t_new;
            res = res_new;
            lambda = (lambda / 3.0).max(1e-12);
            if drop <= 1e-14 * cost.max(1.0) {
                break;
            }
        } else {
            lambda *= 5.0;
            if lambda > 1e8 {
                break;
            }
        }
    }
    PoseSE3::new(rot, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epipolar::testsupport::{canonical, fundamental_from_pose, skew, two_view, TwoViewSpec};
    use nalgebra::Unit;

    fn unit_pixel_camera() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0)
    }

    #[test]
    fn essential_matches_the_pose_construction() {
        let spec = TwoViewSpec::default().with_n(20).with_seed(8);
        let tv = two_view(&spec);
        let f = FundamentalMatrix::from_matrix(tv.f_true).unwrap();
        let e = essential_from_fundamental(&f, &tv.k, &tv.k_prime).unwrap();
        let e_true = skew(&tv.translation) * tv.rotation.matrix();
        let diff = (canonical(e.matrix()) - canonical(&e_true)).norm();
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn essential_with_identity_intrinsics_is_the_projected_fundamental() {
        let k = unit_pixel_camera();
        let t = Vector3::new(0.2, -0.4, 0.8);
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 0.3, 0.2)), 0.3);
        let e_true = skew(&t) * r.matrix();
        let f = FundamentalMatrix::from_matrix(e_true).unwrap();
        let e = essential_from_fundamental(&f, &k, &k).unwrap();
        let diff = (canonical(e.matrix()) - canonical(&e_true)).norm();
        assert!(diff < 1e-12, "diff {diff}");
        let sv = e.matrix().svd(false, false).singular_values;
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((s[0] - s[1]).abs() < 1e-12 && s[2] < 1e-12);
    }

    #[test]
    fn full_rank_fundamental_is_rejected() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let f = FundamentalMatrix::from_matrix(m).unwrap();
        let k = unit_pixel_camera();
        assert!(matches!(
            essential_from_fundamental(&f, &k, &k),
            Err(EpipolarError::NotRankTwo(_))
        ));
    }

    #[test]
    fn decompose_recovers_a_general_pose() {
        let spec = TwoViewSpec::default().with_n(30).with_seed(14);
        let tv = two_view(&spec);
        let f = FundamentalMatrix::from_matrix(tv.f_true).unwrap();
        let pose = pose_from_fundamental(&f, &tv.matches, &tv.k, &tv.k_prime).unwrap();
        let angle = pose.rotation.angle_to(&tv.rotation);
        assert!(angle < 1e-8, "angle {angle}");
        let t_dir = tv.translation.normalize();
        assert!((pose.translation - t_dir).norm() < 1e-8);
        assert!((pose.translation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decompose_recovers_pure_translation() {
        let spec = TwoViewSpec::default()
            .with_n(25)
            .with_seed(6)
            .with_pose(Rotation3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let tv = two_view(&spec);
        let f = FundamentalMatrix::from_matrix(tv.f_true).unwrap();
        let pose = pose_from_fundamental(&f, &tv.matches, &tv.k, &tv.k_prime).unwrap();
        assert!(pose.rotation.angle() < 1e-8);
        assert!((pose.translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn zero_essential_is_rejected() {
        assert_eq!(
            EssentialMatrix::from_matrix(Matrix3::zeros()),
            Err(EpipolarError::DegenerateEssential)
        );
    }

    #[test]
    fn no_matches_means_no_cheirality_decision() {
        let t = Vector3::new(0.0, 0.0, 1.0);
        let e = EssentialMatrix::from_matrix(skew(&t)).unwrap();
        let k = unit_pixel_camera();
        assert_eq!(
            decompose_essential(&e, &[], &k, &k),
            Err(EpipolarError::CheiralityAmbiguous)
        );
    }

    #[test]
    fn triangulation_reproduces_generated_depths() {
        let spec = TwoViewSpec::default().with_n(10).with_seed(3);
        let tv = two_view(&spec);
        let k_inv = tv.k.inverse_matrix();
        let kp_inv = tv.k_prime.inverse_matrix();
        for (c, p_true) in tv.matches.iter().zip(&tv.points) {
            let x1 = k_inv * c.x.homogeneous();
            let x2 = kp_inv * c.x_prime.homogeneous();
            let p = triangulate_normalized(
                tv.rotation.matrix(),
                &tv.translation,
                &x1,
                &x2,
            )
            .unwrap();
            assert!((p - p_true).norm() < 1e-6, "p {p:?} truth {p_true:?}");
        }
    }

    #[test]
    fn fundamental_from_pose_has_rank_two() {
        let tv = two_view(&TwoViewSpec::default().with_n(9).with_seed(77));
        let f = FundamentalMatrix::from_matrix(tv.f_true).unwrap();
        assert!(f.rank_ratio() < 1e-12);
        let _ = fundamental_from_pose(&tv.k, &tv.k_prime, &tv.rotation, &tv.translation);
    }

    #[test]
    fn refine_pose_returns_a_perturbed_pose_to_the_truth() {
        let tv = two_view(&TwoViewSpec::default().with_n(60).with_seed(31));
        let truth = PoseSE3::new(tv.rotation, tv.translation.normalize());
        let wobble = Rotation3::from_axis_angle(
            &Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)),
            0.015,
        );
        let start = PoseSE3::new(
            wobble * tv.rotation,
            (tv.translation + Vector3::new(0.03, -0.02, 0.04)).normalize(),
        );
        let refined = refine_pose_epipolar(&start, &tv.matches, &tv.k, &tv.k_prime, 30);
        let rot_err = refined.rotation_angle_to(&truth);
        let t_err = (refined.translation - truth.translation).norm();
        assert!(rot_err < 1e-6, "rotation err {rot_err}");
        assert!(t_err < 1e-6, "translation err {t_err}");
        assert!((refined.translation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refine_pose_never_worsens_the_robust_cost() {
        let tv = two_view(&TwoViewSpec::default().with_n(40).with_seed(32));
        let start = PoseSE3::new(tv.rotation, tv.translation.normalize());
        let refined = refine_pose_epipolar(&start, &tv.matches, &tv.k, &tv.k_prime, 10);
        let cost = |p: &PoseSE3| -> f64 {
            let res =
                whitened_residuals(&p.rotation, &p.translation, &tv.matches, &tv.k, &tv.k_prime)
                    .unwrap();
            huber_weights(&res).1
        };
        assert!(cost(&refined) <= cost(&start) + 1e-18);
    }

    #[test]
    fn refine_pose_passes_tiny_inputs_through() {
        let tv = two_view(&TwoViewSpec::default().with_n(4).with_seed(33));
        let start = PoseSE3::new(tv.rotation, tv.translation.normalize());
        let out = refine_pose_epipolar(&start, &tv.matches, &tv.k, &tv.k_prime, 10);
        assert_eq!(out.rotation, start.rotation);
        assert_eq!(out.translation, start.translation);
    }
}
