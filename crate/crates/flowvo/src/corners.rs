//! Minimum-eigenvalue corner detection and patch matching.
//!
//! Supplies the sparse correspondences that bootstrap the epipolar
//! constraint for cost-volume injection and the displacement magnitudes
//! consumed by the parallax gate.

use rayon::prelude::*;

use crate::geometry::Pixel2;
use crate::imageops::GrayImage;

#[derive(Debug, Clone, Copy)]
pub struct CornerConfig {
    pub max_corners: usize,
    /// Minimum structure-tensor eigenvalue accepted.
    pub quality: f64,
    /// Non-maximum suppression radius in pixels.
    pub nms_radius: usize,
}

impl Default for CornerConfig {
    fn default() -> Self {
        Self { max_corners: 400, quality: 1e-5, nms_radius: 3 }
    }
}

/// Shi-Tomasi style detector: smallest eigenvalue of the 3x3-summed
/// structure tensor, greedy non-maximum suppression, strongest first.
pub fn detect_corners(img: &GrayImage, cfg: &CornerConfig) -> Vec<Pixel2> {
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = img.sobel();
    let mut score = vec![0.0f64; w * h];
    score.par_iter_mut().enumerate().for_each(|(i, s)| {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let px = gx.get_clamped(x + dx, y + dy);
                let py = gy.get_clamped(x + dx, y + dy);
                sxx += px * px;
                sxy += px * py;
                syy += py * py;
            }
        }
        let mean = 0.5 * (sxx + syy);
        let r = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
        *s = mean - r;
    });

    let mut order: Vec<usize> = (0..w * h).filter(|&i| score[i] > cfg.quality).collect();
    order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
    let mut taken = vec![false; w * h];
    let mut out = Vec::new();
    let r = cfg.nms_radius as i64;
    for i in order {
        if out.len() >= cfg.max_corners {
            break;
        }
        if taken[i] {
            continue;
        }
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        out.push(Pixel2::new(x as f64, y as f64));
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    taken[ny as usize * w + nx as usize] = true;
                }
            }
        }
    }
    out
}

/// Zero-mean normalized cross-correlation of 7x7 patches.
fn zncc(a: &GrayImage, ax: i64, ay: i64, b: &GrayImage, bx: i64, by: i64) -> f64 {
    const R: i64 = 3;
    const N: f64 = 49.0;
    let (mut ma, mut mb) = (0.0, 0.0);
    for dy in -R..=R {
        for dx in -R..=R {
            ma += a.get_clamped(ax + dx, ay + dy);
            mb += b.get_clamped(bx + dx, by + dy);
        }
    }
    ma /= N;
    mb /= N;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for dy in -R..=R {
        for dx in -R..=R {
            let va = a.get_clamped(ax + dx, ay + dy) - ma;
            let vb = b.get_clamped(bx + dx, by + dy) - mb;
            num += va * vb;
            da += va * va;
            db += vb * vb;
        }
    }
    let den = (da * db).sqrt();
    if den < 1e-12 {
        0.0
    } else {
        num / den
    }
}

/// Matches corners of `img1` into `img2` by exhaustive ZNCC search within
/// `search_radius`, keeping symmetric best matches above `min_score`.
pub fn match_corners(
    img1: &GrayImage,
    img2: &GrayImage,
    corners: &[Pixel2],
    search_radius: i64,
    min_score: f64,
) -> Vec<(Pixel2, Pixel2)> {
    let (w, h) = (img2.width() as i64, img2.height() as i64);
    let found: Vec<Option<(Pixel2, Pixel2)>> = corners
        .par_iter()
        .map(|&c| {
            let (cx, cy) = (c.u as i64, c.v as i64);
            let mut best = (min_score, None::<(i64, i64)>);
            for dy in -search_radius..=search_radius {
                for dx in -search_radius..=search_radius {
                    let (qx, qy) = (cx + dx, cy + dy);
                    if qx < 0 || qy < 0 || qx >= w || qy >= h {
                        continue;
                    }
                    let s = zncc(img1, cx, cy, img2, qx, qy);
                    if s > best.0 {
                        best = (s, Some((qx, qy)));
                    }
                }
            }
            let (qx, qy) = best.1?;
            // Reverse check: the target must prefer the source location.
            let mut back = (best.0, (cx, cy));
            for dy in -search_radius..=search_radius {
                for dx in -search_radius..=search_radius {
                    let (px, py) = (qx + dx, qy + dy);
                    if px < 0 || py < 0 || px >= img1.width() as i64 || py >= img1.height() as i64 {
                        continue;
                    }
                    let s = zncc(img2, qx, qy, img1, px, py);
                    if s > back.0 {
                        back = (s, (px, py));
                    }
                }
            }
            if back.1 == (cx, cy) {
                Some((c, Pixel2::new(qx as f64, qy as f64)))
            } else {
                None
            }
        })
        .collect();
    found.into_iter().flatten().collect()
}
