//! RANSAC over matches with per-match confidence: minimal samples are
//! drawn in proportion to sqrt(det Y), candidates are scored by the
//! minimum Mahalanobis distance to the epipolar line, and the winning
//! consensus set is polished with Mahalanobis-weighted refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eight_point::{normalized_eight_point, weighted_refine, RefineStatus, WeightFn};
use super::weights::min_mahalanobis_point_line;
use super::{Correspondence, EpipolarError, FundamentalMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Draw without replacement with probability proportional to
    /// sqrt(det Y), floor-clamped so every match stays reachable.
    Multinomial,
    /// Ignore confidence; classical uniform sampling.
    Uniform,
}

#[derive(Debug, Clone, Copy)]
pub struct RansacConfig {
    pub max_iters: usize,
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub seed: u64,
    pub sampling: SamplingStrategy,
    pub refine_iters: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            inlier_threshold: 2.0,
            confidence: 0.99,
            seed: 0,
            sampling: SamplingStrategy::Multinomial,
            refine_iters: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacResult {
    pub f: FundamentalMatrix,
    /// Consensus mask of the winning candidate, before refinement.
    pub inliers: Vec<bool>,
    pub iterations: usize,
    /// Every minimal sample drawn, in draw order.
    pub samples: Vec<[usize; 8]>,
    pub refine_status: RefineStatus,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Eight distinct indices, drawn sequentially with probability
/// proportional to the remaining weights.
fn sample_eight(weights: &[f64], rng: &mut ChaCha8Rng) -> [usize; 8] {
    let mut w = weights.to_vec();
    let mut out = [0usize; 8];
    for slot in out.iter_mut() {
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = None;
        let mut last_positive = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            last_positive = Some(i);
            if u < wi {
                pick = Some(i);
                break;
            }
            u -= wi;
        }
        let i = pick.or(last_positive).expect("at least 8 positive weights");
        *slot = i;
        w[i] = 0.0;
    }
    out
}

fn consensus_mask(
    f: &FundamentalMatrix,
    matches: &[Correspondence],
    threshold: f64,
) -> Vec<bool> {
    matches
        .iter()
        .map(|c| {
            let line = f.epipolar_line(c.x);
            matches!(
                min_mahalanobis_point_line(c.x_prime, &c.info, &line),
                Ok(d) if d < threshold
            )
        })
        .collect()
}

pub fn ransac_mahalanobis(
    matches: &[Correspondence],
    cfg: &RansacConfig,
) -> Result<RansacResult, EpipolarError> {
    let n = matches.len();
    if n < 8 {
        return Err(EpipolarError::InsufficientMatches { got: n, need: 8 });
    }
    let weights: Vec<f64> = match cfg.sampling {
        SamplingStrategy::Uniform => vec![1.0; n],
        SamplingStrategy::Multinomial => {
            let raw: Vec<f64> = matches.iter().map(|c| c.info.det().max(0.0).sqrt()).collect();
            let max_w = raw.iter().cloned().fold(0.0, f64::max);
            if max_w <= 0.0 {
                vec![1.0; n]
            } else {
                raw.iter().map(|&w| w.max(max_w * 1e-12)).collect()
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::new();
    let mut best: Option<(usize, FundamentalMatrix, Vec<bool>)> = None;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let idx = sample_eight(&weights, &mut rng);
        samples.push(idx);
        let minimal: Vec<Correspondence> = idx.iter().map(|&i| matches[i]).collect();
        let Ok(candidate) = normalized_eight_point(&minimal) else {
            continue;
        };
        let mask = consensus_mask(&candidate, matches, cfg.inlier_threshold);
        let count = mask.iter().filter(|&&b| b).count();
        let improves = match &best {
            Some((best_count, _, _)) => count > *best_count,
            None => count > 0,
        };
        if improves {
            best = Some((count, candidate, mask));
        }
        if let Some((best_count, _, _)) = &best {
            if *best_count >= 8 {
                let eps = *best_count as f64 / n as f64;
                let p_all = eps.powi(8);
                if p_all >= 1.0 {
                    break;
                }
                let needed = (1.0 - cfg.confidence).ln() / (1.0 - p_all).ln();
                if iterations as f64 >= needed {
                    break;
                }
            }
        }
    }

    let Some((count, candidate, mask)) = best else {
        return Err(EpipolarError::NoConsensus);
    };
    if count < 8 {
        return Err(EpipolarError::NoConsensus);
    }
    let inlier_matches: Vec<Correspondence> = mask
        .iter()
        .zip(matches)
        .filter_map(|(&keep, c)| keep.then_some(*c))
        .collect();
    let refined = weighted_refine(&candidate, &inlier_matches, WeightFn::Mahalanobis, cfg.refine_iters)?;
    Ok(RansacResult {
        f: refined.f,
        inliers: mask,
        iterations,
        samples,
        refine_status: refined.status,
    })
}
