//! Linear two-view triangulation in pixel coordinates, with
//! first-order propagation of match uncertainty to depth and to a 3-D
//! information matrix.

use nalgebra::{Matrix2x3, Matrix3, Matrix4, Vector3};

use crate::epipolar::Correspondence;
use crate::geometry::{CameraIntrinsics, Pixel2, Point3, PoseSE3};

/// One triangulated match. `info` is the match information pushed
/// through the second projection: rank 2, since a single image match
/// leaves the along-ray direction unconstrained.
#[derive(Debug, Clone)]
pub struct Triangulated {
    pub position: Vector3<f64>,
    pub info: Matrix3<f64>,
    pub depth_std: f64,
}

impl Triangulated {
    pub fn depth(&self) -> f64 {
        self.position.z
    }

    pub fn to_point3(&self) -> Point3 {
        Point3::with_info(self.position, self.info)
    }
}

fn projection_rows(k: &CameraIntrinsics, pose: Option<&PoseSE3>) -> Matrix4<f64> {
    let mut p = Matrix4::identity();
    if let Some(pose) = pose {
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation.matrix());
        p.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation);
    }
    let mut kk = Matrix4::identity();
    kk.fixed_view_mut::<3, 3>(0, 0).copy_from(&k.matrix());
    kk * p
}

fn solve_dlt(p1: &Matrix4<f64>, p2: &Matrix4<f64>, a: Pixel2, b: Pixel2) -> Option<Vector3<f64>> {
    let row = |p: &Matrix4<f64>, i: usize| p.row(i).into_owned();
    let mut m = Matrix4::zeros();
    m.set_row(0, &(row(p1, 2) * a.u - row(p1, 0)));
    m.set_row(1, &(row(p1, 2) * a.v - row(p1, 1)));
    m.set_row(2, &(row(p2, 2) * b.u - row(p2, 0)));
    m.set_row(3, &(row(p2, 2) * b.v - row(p2, 1)));
    let svd = m.svd(false, true);
    let sv = svd.singular_values;
    let mut min_i = 0;
    for i in 1..4 {
        if sv[i] < sv[min_i] {
            min_i = i;
        }
    }
    let vt = svd.v_t.expect("requested");
    let h = vt.row(min_i);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    Some(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// d(pixel)/d(camera point) for the pinhole projection, evaluated at a
/// camera-frame point.
fn pinhole_jacobian(k: &CameraIntrinsics, pc: &Vector3<f64>) -> Matrix2x3<f64> {
    let z = pc.z;
    Matrix2x3::new(
        k.fx / z, 0.0, -k.fx * pc.x / (z * z),
        0.0, k.fy / z, -k.fy * pc.y / (z * z),
    )
}

/// Triangulates every match against cameras K[I|0] and K'[R|t].
/// Entries come back None when the rays are parallel, the homogeneous
/// scale vanishes, or the point falls behind either camera; a zero
/// baseline invalidates everything.
pub fn triangulate(
    pose: &PoseSE3,
    k: &CameraIntrinsics,
    k_prime: &CameraIntrinsics,
    matches: &[Correspondence],
) -> Vec<Option<Triangulated>> {
    if pose.translation.norm() < 1e-15 {
        return vec![None; matches.len()];
    }
    let p1 = projection_rows(k, None);
    let p2 = projection_rows(k_prime, Some(pose));
    matches
        .iter()
        .map(|c| {
            let x = solve_dlt(&p1, &p2, c.x, c.x_prime)?;
            let x2 = pose.transform(&x);
            if x.z <= 0.0 || x2.z <= 0.0 {
                return None;
            }

            // Match information through the second projection.
            let j_pix = pinhole_jacobian(k_prime, &x2);
            let j_point = j_pix * pose.rotation.matrix();
            let info = j_point.transpose() * c.info.matrix() * j_point;

            // Depth variance along the first viewing ray: X(lambda) =
            // lambda * K^-1 x~, whose z component is lambda itself.
            let ray = k.inverse_matrix() * c.x.homogeneous();
            let lambda = x.z;
            let delta = (1e-6 * lambda.abs()).max(1e-9);
            let project2 = |l: f64| -> Option<Pixel2> {
                let pc = pose.transform(&(ray * l));
                k_prime.project(&pc)
            };
            let (fwd, bwd) = (project2(lambda + delta)?, project2(lambda - delta)?);
            let j_lambda = nalgebra::Vector2::new(
                (fwd.u - bwd.u) / (2.0 * delta),
                (fwd.v - bwd.v) / (2.0 * delta),
            );
            let info_lambda = (j_lambda.transpose() * c.info.matrix() * j_lambda)[(0, 0)];
            if info_lambda <= 1e-300 {
                return None;
            }
            Some(Triangulated {
                position: x,
                info,
                depth_std: (1.0 / info_lambda).sqrt(),
            })
        })
        .collect()
}
