//! Bivariate Gaussian fit over a cost slice.
//!
//! Around the extracted displacement mu the slice is modeled as half a
//! squared Mahalanobis distance, d^2 = (x - mu)^T Y (x - mu), and Y is
//! recovered by least squares over candidates below the cost threshold.

use nalgebra::{Matrix3, Vector3};

use super::cost::CostVolume;
use crate::uncertainty::{InfoMatrix2, MAX_UNCERTAINTY_INFO};

/// Multiplier turning a matching cost into a squared Mahalanobis
/// distance; costs behave as negative log-likelihoods, which are half
/// the squared distance.
pub const COST_TO_SQ_DISTANCE: f64 = 2.0;

/// Least-squares fit of Y to one D x D cost slice. `mu` is the extracted
/// displacement in window units. Returns the maximum-uncertainty sentinel
/// when fewer than three candidates fall below `cost_threshold` or the
/// design matrix is rank deficient.
pub fn fit_information_matrix(
    slice: &[f64],
    window: usize,
    mu: (f64, f64),
    cost_threshold: f64,
    cost_to_dsq: f64,
) -> InfoMatrix2 {
    debug_assert_eq!(slice.len(), window * window);
    let radius = (window as i64 - 1) / 2;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    let mut support = 0usize;
    let mut k = 0usize;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let c = slice[k];
            k += 1;
            if c >= cost_threshold {
                continue;
            }
            let x = dx as f64 - mu.0;
            let y = dy as f64 - mu.1;
            let row = Vector3::new(x * x, 2.0 * x * y, y * y);
            ata += row * row.transpose();
            atb += row * (cost_to_dsq * c);
            support += 1;
        }
    }
    if support < 3 {
        return InfoMatrix2::max_uncertainty();
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax;
    // Collinear design rows leave at most one usable direction; axis-only
    // support (rank 2) still solves via the minimum-norm pseudo-inverse,
    // which zeroes the unobserved cross term.
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if smax <= 0.0 || rank <= 1 {
        return InfoMatrix2::max_uncertainty();
    }
    let y = svd.solve(&atb, cutoff).expect("svd computed with vectors");
    InfoMatrix2::new(y[0], y[1], y[2]).clamp_positive_definite(MAX_UNCERTAINTY_INFO)
}

/// Fits every pixel of a cost volume given its extracted flow means.
pub fn fit_volume(
    vol: &CostVolume,
    flow: &super::FlowField,
    cost_threshold: f64,
    cost_to_dsq: f64,
) -> Vec<InfoMatrix2> {
    use rayon::prelude::*;
    let (w, h, window) = (vol.width(), vol.height(), vol.window());
    assert_eq!((flow.width(), flow.height()), (w, h));
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let f = flow.flow_at(x, y);
            fit_information_matrix(vol.slice(x, y), window, (f[0], f[1]), cost_threshold, cost_to_dsq)
        })
        .collect()
}
