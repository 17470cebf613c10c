//! Loop-candidate recall and appearance gating.
//!
//! Recall is purely positional: a query frame proposes every much earlier
//! frame whose estimated position lies within a revisit radius. The index
//! gap keeps ordinary odometry neighbors out; the stride bounds how often
//! queries run. Proposals then pass through an SSIM gate that rejects
//! dissimilar pairs and keeps only the best few per query.

use crate::geometry::PoseSE3;
use crate::imageops::GrayImage;

use super::ssim::mean_ssim;
use super::LoopError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateStatus {
    Proposed,
    SsimPass,
    Verified,
    Rejected,
}

#[derive(Debug, Clone, Copy)]
pub struct LoopCandidate {
    /// Earlier frame index.
    pub i: usize,
    /// Query frame index, i + gap or later.
    pub j: usize,
    pub ssim: f64,
    /// Valid-flow fraction observed during verification, 0 until then.
    pub reliability: f64,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct CandidateConfig {
    /// Positions closer than this propose a loop.
    pub radius: f64,
    /// Minimum index separation between query and match.
    pub min_index_gap: usize,
    /// Query every stride-th frame.
    pub stride: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self { radius: 10.0, min_index_gap: 100, stride: 10 }
    }
}

pub fn find_candidates(trajectory: &[PoseSE3], cfg: &CandidateConfig) -> Vec<LoopCandidate> {
    assert!(cfg.stride > 0, "stride must be positive");
    let mut out = Vec::new();
    for j in (cfg.stride..trajectory.len()).step_by(cfg.stride) {
        for i in 0..j {
            if j - i < cfg.min_index_gap {
                break;
            }
            let gap = (trajectory[j].translation - trajectory[i].translation).norm();
            if gap <= cfg.radius {
                out.push(LoopCandidate {
                    i,
                    j,
                    ssim: 0.0,
                    reliability: 0.0,
                    status: CandidateStatus::Proposed,
                });
            }
        }
    }
    out
}

/// Scores every proposal, rejects scores below `threshold`, and keeps at
/// most `max_keep` survivors per query frame (best SSIM first). All
/// candidates are returned with their final status for logging.
pub fn gate_by_ssim(
    mut candidates: Vec<LoopCandidate>,
    images: &[GrayImage],
    threshold: f64,
    max_keep: usize,
) -> Result<Vec<LoopCandidate>, LoopError> {
    for c in &mut candidates {
        for index in [c.i, c.j] {
            if index >= images.len() {
                return Err(LoopError::InvalidIndex { index, len: images.len() });
            }
        }
        c.ssim = mean_ssim(&images[c.i], &images[c.j])?;
        c.status = if c.ssim >= threshold {
            CandidateStatus::SsimPass
        } else {
            CandidateStatus::Rejected
        };
    }

    // Per query, demote everything past the max_keep best scores.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[a]
            .j
            .cmp(&candidates[b].j)
            .then(candidates[b].ssim.partial_cmp(&candidates[a].ssim).unwrap())
            .then(candidates[a].i.cmp(&candidates[b].i))
    });
    let mut kept_for = (usize::MAX, 0usize);
    for idx in order {
        let c = &mut candidates[idx];
        if c.status != CandidateStatus::SsimPass {
            continue;
        }
        if kept_for.0 != c.j {
            kept_for = (c.j, 0);
        }
        if kept_for.1 < max_keep {
            kept_for.1 += 1;
        } else {
            c.status = CandidateStatus::Rejected;
        }
    }
    Ok(candidates)
}
