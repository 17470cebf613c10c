//! Robust ground-plane extraction from triangulated points below the
//! camera.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ReconstructError;
use crate::geometry::Point3;

/// a*x + b*y + c*z + d = 0 with (a, b, c) unit norm and b > 0, so the
/// normal points toward positive y (downward, below the camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.a * p.x + self.b * p.y + self.c * p.z + self.d
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    fn from_normal_point(n: Vector3<f64>, p: &Vector3<f64>) -> Option<Plane> {
        let norm = n.norm();
        if norm < 1e-12 {
            return None;
        }
        let n = n / norm;
        let plane = Plane { a: n.x, b: n.y, c: n.z, d: -n.dot(p) };
        Some(plane.oriented())
    }

    pub fn from_points(p1: &Vector3<f64>, p2: &Vector3<f64>, p3: &Vector3<f64>) -> Option<Plane> {
        Plane::from_normal_point((p2 - p1).cross(&(p3 - p1)), p1)
    }

    /// Flips the sign so b > 0 when the normal has any vertical
    /// component.
    fn oriented(self) -> Plane {
        if self.b < 0.0 {
            Plane { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlaneFitConfig {
    pub max_iters: usize,
    pub inlier_tol: f64,
    /// Minimum |normal . (0,1,0)| for a candidate to count as ground.
    pub normal_prior_min: f64,
    pub seed: u64,
}

impl Default for PlaneFitConfig {
    fn default() -> Self {
        Self { max_iters: 200, inlier_tol: 0.02, normal_prior_min: 0.8, seed: 0 }
    }
}

fn least_squares_plane(points: &[Vector3<f64>]) -> Option<Plane> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(scatter);
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    Plane::from_normal_point(eig.eigenvectors.column(min_i).into_owned(), &centroid)
}

/// RANSAC plane fit over the points below the camera (y > 0), with a
/// vertical-normal prior, then a least-squares refit on the consensus
/// set.
pub fn fit_ground_plane(
    points: &[Point3],
    cfg: &PlaneFitConfig,
) -> Result<Plane, ReconstructError> {
    let below: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| p.position)
        .filter(|p| p.y > 0.0)
        .collect();
    if below.len() < 3 {
        return Err(ReconstructError::NoPlane);
    }
    if below.len() == 3 {
        let plane = Plane::from_points(&below[0], &below[1], &below[2])
            .ok_or(ReconstructError::NoPlane)?;
        if plane.b.abs() < cfg.normal_prior_min {
            return Err(ReconstructError::NoPlane);
        }
        return Ok(plane);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..cfg.max_iters {
        let mut idx = [0usize; 3];
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..below.len());
        }
        if idx[0] == idx[1] || idx[0] == idx[2] || idx[1] == idx[2] {
            continue;
        }
        let Some(plane) = Plane::from_points(&below[idx[0]], &below[idx[1]], &below[idx[2]])
        else {
            continue;
        };
        if plane.b.abs() < cfg.normal_prior_min {
            continue;
        }
        let count = below.iter().filter(|p| plane.distance(p) <= cfg.inlier_tol).count();
        if best.map_or(true, |(c, _)| count > c) {
            best = Some((count, plane));
        }
    }
    let Some((_, candidate)) = best else {
        return Err(ReconstructError::NoPlane);
    };
    let inliers: Vec<Vector3<f64>> = below
        .iter()
        .filter(|p| candidate.distance(p) <= cfg.inlier_tol)
        .copied()
        .collect();
    match least_squares_plane(&inliers) {
        Some(refit) if refit.b.abs() >= cfg.normal_prior_min => Ok(refit),
        _ => Ok(candidate),
    }
}
