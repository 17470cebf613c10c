//! Two-view geometry estimation weighted by match uncertainty: the
//! linear eight-point solver, Sampson and Mahalanobis row scalings,
//! confidence-weighted RANSAC, and pose recovery from the essential
//! matrix.

pub mod eight_point;
pub mod essential;
pub mod ransac;
#[cfg(test)]
pub(crate) mod testsupport;
pub mod weights;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::{epipolar_line, EpipolarLine, Pixel2};
use crate::uncertainty::InfoMatrix2;

pub use eight_point::{normalized_eight_point, refine_with, weighted_refine, Refined, RefineStatus, WeightFn};
pub use essential::{
    decompose_essential, essential_from_fundamental, pose_from_fundamental, refine_pose_epipolar,
    EssentialMatrix,
};
pub use ransac::{ransac_mahalanobis, RansacConfig, RansacResult, SamplingStrategy};
pub use weights::{mahalanobis_sq, mahalanobis_weight, min_mahalanobis_point_line, sampson_weight};

#[derive(Debug, Error, PartialEq)]
pub enum EpipolarError {
    #[error("information matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("degenerate epipolar line (a = b = 0)")]
    DegenerateLine,
    #[error("quadratic form denominator not positive; invariant violated")]
    QuadraticFormInvariant,
    #[error("sampson denominator is zero")]
    ZeroDenominator,
    #[error("need at least {need} matches, got {got}")]
    InsufficientMatches { got: usize, need: usize },
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("matrix is rank 3 beyond tolerance: ratio {0:.3e}")]
    NotRankTwo(f64),
    #[error("essential matrix is numerically zero")]
    DegenerateEssential,
    #[error("cheirality test is ambiguous")]
    CheiralityAmbiguous,
    #[error("no RANSAC candidate reached the minimal consensus")]
    NoConsensus,
}

/// Matched pixel pair; location error lives entirely in the second
/// image, so the information matrix describes x_prime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x: Pixel2,
    pub x_prime: Pixel2,
    pub info: InfoMatrix2,
}

impl Correspondence {
    pub fn new(x: Pixel2, x_prime: Pixel2, info: InfoMatrix2) -> Self {
        Self { x, x_prime, info }
    }

    pub fn with_identity_info(x: Pixel2, x_prime: Pixel2) -> Self {
        Self { x, x_prime, info: InfoMatrix2::identity() }
    }
}

/// 3x3 fundamental matrix stored at unit Frobenius norm with a
/// deterministic sign (largest-magnitude entry positive). Rank 2 is
/// enforced by refinement, not by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, EpipolarError> {
        let norm = m.norm();
        if norm < 1e-300 || !norm.is_finite() {
            return Err(EpipolarError::DegenerateConfiguration);
        }
        let mut m = m / norm;
        let mut max_abs = 0.0;
        let mut max_val = 0.0;
        for &v in m.iter() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                max_val = v;
            }
        }
        if max_val < 0.0 {
            m = -m;
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn epipolar_line(&self, x: Pixel2) -> EpipolarLine {
        epipolar_line(&self.m, x)
    }

    /// Algebraic residual x'~^T F x~.
    pub fn residual(&self, c: &Correspondence) -> f64 {
        (c.x_prime.homogeneous().transpose() * self.m * c.x.homogeneous())[(0, 0)]
    }

    /// sigma_3 / sigma_1.
    pub fn rank_ratio(&self) -> f64 {
        let sv = self.m.svd(false, false).singular_values;
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if s[0] == 0.0 {
            0.0
        } else {
            s[2] / s[0]
        }
    }

    /// Nearest rank-2 matrix under the Frobenius norm, renormalized.
    pub fn rank2_projected(&self) -> Self {
        let svd = self.m.svd(true, true);
        let mut vals = svd.singular_values;
        // Zero the smallest singular value.
        let mut min_i = 0;
        for i in 1..3 {
            if vals[i] < vals[min_i] {
                min_i = i;
            }
        }
        vals[min_i] = 0.0;
        let u = svd.u.expect("computed");
        let vt = svd.v_t.expect("computed");
        let rebuilt = u * Matrix3::from_diagonal(&vals) * vt;
        Self::from_matrix(rebuilt).expect("projection keeps a nonzero matrix")
    }
}

/// Per-match diagnostics as tab-separated text: index, algebraic
/// residual, weight, minimum Mahalanobis distance, inlier flag.
pub fn write_match_diagnostics(
    path: &std::path::Path,
    f: &FundamentalMatrix,
    matches: &[Correspondence],
    inlier_threshold: f64,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "index\tresidual\tweight\tmin_dm\tinlier")?;
    for (i, c) in matches.iter().enumerate() {
        let residual = f.residual(c);
        let weight = weights::mahalanobis_weight(f.matrix(), c.x, &c.info);
        let line = f.epipolar_line(c.x);
        let dm = weights::min_mahalanobis_point_line(c.x_prime, &c.info, &line);
        let (w_s, d_s, inl) = match (weight, dm) {
            (Ok(w), Ok(d)) => (format!("{w}"), format!("{d}"), d < inlier_threshold),
            _ => ("skip".to_string(), "skip".to_string(), false),
        };
        writeln!(out, "{i}\t{residual}\t{w_s}\t{d_s}\t{inl}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fundamental_matrix_normalizes_and_fixes_sign() {
        let m = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -4.0, 0.0, 4.0, 0.0);
        let f = FundamentalMatrix::from_matrix(m).unwrap();
        assert!((f.matrix().norm() - 1.0).abs() < 1e-15);
        let g = FundamentalMatrix::from_matrix(-m).unwrap();
        assert_eq!(f, g);
        assert!(FundamentalMatrix::from_matrix(Matrix3::zeros()).is_err());
    }

    #[test]
    fn rank2_projection_zeroes_smallest_singular_value() {
        let m = Matrix3::new(2.0, 0.1, 0.0, 0.3, 1.0, 0.0, 0.0, 0.2, 0.5);
        let f = FundamentalMatrix::from_matrix(m).unwrap();
        assert!(f.rank_ratio() > 1e-3);
        let p = f.rank2_projected();
        assert!(p.rank_ratio() < 1e-12, "ratio {}", p.rank_ratio());
        assert!((p.matrix().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_file_lists_every_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.tsv");
        let f = FundamentalMatrix::from_matrix(Matrix3::new(
            0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0,
        ))
        .unwrap();
        let matches = vec![
            Correspondence::with_identity_info(Pixel2::new(1.0, 2.0), Pixel2::new(1.5, 2.0)),
            Correspondence::with_identity_info(Pixel2::new(3.0, 1.0), Pixel2::new(3.0, 9.0)),
        ];
        write_match_diagnostics(&path, &f, &matches, 2.0).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with("true"));
        assert!(lines[2].ends_with("false"));
    }
}
