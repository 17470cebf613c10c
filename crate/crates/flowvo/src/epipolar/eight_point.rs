//! Linear fundamental-matrix estimation: Hartley-normalized direct
//! solve plus iteratively reweighted refinement.

use nalgebra::{DMatrix, Matrix3};

use super::{Correspondence, EpipolarError, FundamentalMatrix};
use crate::geometry::Pixel2;

/// Similarity that moves a point set to centroid zero and mean
/// distance sqrt(2). `scale` is the isotropic factor, also needed to
/// carry information matrices into the normalized frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Normalizer {
    pub scale: f64,
    pub cu: f64,
    pub cv: f64,
}

impl Normalizer {
    pub fn fit<I: Iterator<Item = Pixel2> + Clone>(points: I) -> Result<Self, EpipolarError> {
        let mut cu = 0.0;
        let mut cv = 0.0;
        let mut n = 0usize;
        for p in points.clone() {
            cu += p.u;
            cv += p.v;
            n += 1;
        }
        if n == 0 {
            return Err(EpipolarError::DegenerateConfiguration);
        }
        cu /= n as f64;
        cv /= n as f64;
        let mut mean_dist = 0.0;
        for p in points {
            mean_dist += ((p.u - cu).powi(2) + (p.v - cv).powi(2)).sqrt();
        }
        mean_dist /= n as f64;
        if mean_dist < 1e-12 {
            return Err(EpipolarError::DegenerateConfiguration);
        }
        Ok(Self { scale: std::f64::consts::SQRT_2 / mean_dist, cu, cv })
    }

    pub fn apply(&self, p: Pixel2) -> Pixel2 {
        Pixel2::new(self.scale * (p.u - self.cu), self.scale * (p.v - self.cv))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.scale, 0.0, -self.scale * self.cu,
            0.0, self.scale, -self.scale * self.cv,
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.scale, 0.0, self.cu,
            0.0, 1.0 / self.scale, self.cv,
            0.0, 0.0, 1.0,
        )
    }
}

fn design_row(c: &Correspondence) -> [f64; 9] {
    let (x, y) = (c.x.u, c.x.v);
    let (xp, yp) = (c.x_prime.u, c.x_prime.v);
    [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0]
}

/// Least-squares null vector of the stacked design rows, reshaped
/// row-major. Also returns sigma_8 / sigma_1 of the padded system for
/// degeneracy detection.
fn solve_nine(rows: &[[f64; 9]]) -> Result<(Matrix3<f64>, f64), EpipolarError> {
    let m = rows.len().max(9);
    let mut a = DMatrix::<f64>::zeros(m, 9);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..9 {
            a[(i, j)] = row[j];
        }
    }
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let s1 = sv[order[0]];
    let s8 = sv[order[7]];
    if s1 <= 0.0 || s8 / s1 < 1e-8 {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    let v_t = svd.v_t.expect("requested");
    let f_vec = v_t.row(order[8]);
    let f = Matrix3::new(
        f_vec[0], f_vec[1], f_vec[2],
        f_vec[3], f_vec[4], f_vec[5],
        f_vec[6], f_vec[7], f_vec[8],
    );
    Ok((f, s8 / s1))
}

/// Direct linear estimate from eight or more matches in Hartley
/// normalized coordinates. The result is not rank-2 projected;
/// refinement owns that step.
pub fn normalized_eight_point(
    matches: &[Correspondence],
) -> Result<FundamentalMatrix, EpipolarError> {
    if matches.len() < 8 {
        return Err(EpipolarError::InsufficientMatches { got: matches.len(), need: 8 });
    }
    let t1 = Normalizer::fit(matches.iter().map(|c| c.x))?;
    let t2 = Normalizer::fit(matches.iter().map(|c| c.x_prime))?;
    let rows: Vec<[f64; 9]> = matches
        .iter()
        .map(|c| {
            design_row(&Correspondence::new(t1.apply(c.x), t2.apply(c.x_prime), c.info))
        })
        .collect();
    let (f_hat, _ratio) = solve_nine(&rows)?;
    let f = t2.matrix().transpose() * f_hat * t1.matrix();
    FundamentalMatrix::from_matrix(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightFn {
    Mahalanobis,
    Sampson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineStatus {
    Converged,
    MaxIterations,
    AbortedWeights,
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub f: FundamentalMatrix,
    pub status: RefineStatus,
    pub iterations: usize,
}

/// Iteratively reweighted linear refinement with a caller-supplied row
/// weight. The closure is evaluated in the Hartley-normalized frame:
/// it receives the current normalized matrix and a correspondence
/// whose pixels and information matrix have been carried through the
/// normalization. Returning None skips the match for that iteration;
/// when more than half the matches are skipped (or fewer than eight
/// remain) the input matrix is returned unchanged with
/// `AbortedWeights`. The final estimate is rank-2 projected.
pub fn refine_with<W>(
    f0: &FundamentalMatrix,
    matches: &[Correspondence],
    max_iters: usize,
    mut weight: W,
) -> Result<Refined, EpipolarError>
where
    W: FnMut(&Matrix3<f64>, &Correspondence) -> Option<f64>,
{
    if matches.len() < 8 {
        return Err(EpipolarError::InsufficientMatches { got: matches.len(), need: 8 });
    }
    let t1 = Normalizer::fit(matches.iter().map(|c| c.x))?;
    let t2 = Normalizer::fit(matches.iter().map(|c| c.x_prime))?;
    let normalized: Vec<Correspondence> = matches
        .iter()
        .map(|c| {
            Correspondence::new(
                t1.apply(c.x),
                t2.apply(c.x_prime),
                c.info.scaled(1.0 / (t2.scale * t2.scale)),
            )
        })
        .collect();

    let to_normalized = |f: &Matrix3<f64>| t2.inverse_matrix().transpose() * f * t1.inverse_matrix();
    let mut cur = to_normalized(f0.matrix());
    cur /= cur.norm();

    let objective = |f: &Matrix3<f64>, weights: &[Option<f64>]| -> f64 {
        normalized
            .iter()
            .zip(weights)
            .filter_map(|(c, w)| {
                w.map(|w| {
                    let r = (c.x_prime.homogeneous().transpose() * f * c.x.homogeneous())[(0, 0)];
                    (w * r).powi(2)
                })
            })
            .sum()
    };

    let mut status = RefineStatus::MaxIterations;
    let mut iterations = 0;
    let mut prev_obj: Option<f64> = None;
    for _ in 0..max_iters {
        let weights: Vec<Option<f64>> =
            normalized.iter().map(|c| weight(&cur, c)).collect();
        let usable = weights.iter().flatten().count();
        if usable * 2 < normalized.len() || usable < 8 {
            return Ok(Refined { f: *f0, status: RefineStatus::AbortedWeights, iterations });
        }
        let rows: Vec<[f64; 9]> = normalized
            .iter()
            .zip(&weights)
            .filter_map(|(c, w)| {
                w.map(|w| {
                    let mut row = design_row(c);
                    for v in &mut row {
                        *v *= w;
                    }
                    row
                })
            })
            .collect();
        let (mut next, _) = solve_nine(&rows)?;
        next /= next.norm();
        iterations += 1;
        let obj = objective(&next, &weights);
        cur = next;
        if let Some(prev) = prev_obj {
            if (prev - obj).abs() < 1e-12 {
                status = RefineStatus::Converged;
                break;
            }
        }
        prev_obj = Some(obj);
    }

    let denorm = t2.matrix().transpose() * cur * t1.matrix();
    let f = FundamentalMatrix::from_matrix(denorm)?.rank2_projected();
    Ok(Refined { f, status, iterations })
}

/// Refinement with one of the built-in weight functions.
pub fn weighted_refine(
    f0: &FundamentalMatrix,
    matches: &[Correspondence],
    weight_fn: WeightFn,
    max_iters: usize,
) -> Result<Refined, EpipolarError> {
    match weight_fn {
        WeightFn::Mahalanobis => refine_with(f0, matches, max_iters, |f, c| {
            super::weights::mahalanobis_weight(f, c.x, &c.info).ok()
        }),
        WeightFn::Sampson => refine_with(f0, matches, max_iters, |f, c| {
            super::weights::sampson_weight(f, c).ok()
        }),
    }
}
