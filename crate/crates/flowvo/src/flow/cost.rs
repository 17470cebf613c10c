//! 4D matching cost volume over a square displacement window.
//!
//! Costs are 1 - f1.f2 over zero-mean, unit-norm 7x7 intensity patches,
//! clamped to [0, 1]; out-of-frame candidates cost the maximum 1.0. The
//! epipolar stage adds a truncated quadratic on top, so injected costs
//! live in [0, 1 + truncation].

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::{FlowError, FlowField};
use crate::geometry::{epipolar_line, point_line_euclidean, Pixel2};

pub const PATCH_RADIUS: usize = 3;
const PATCH_LEN: usize = (2 * PATCH_RADIUS + 1) * (2 * PATCH_RADIUS + 1);

#[derive(Debug, Clone)]
pub struct CostVolume {
    width: usize,
    height: usize,
    window: usize,
    costs: Vec<f64>,
    epi_skipped: Vec<bool>,
}

impl CostVolume {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Displacement window side length D; candidates span [-D/2, D/2]^2.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn radius(&self) -> i64 {
        (self.window as i64 - 1) / 2
    }

    #[inline]
    fn slice_offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.window * self.window
    }

    /// D*D costs for one pixel, row-major in (dy, dx).
    pub fn slice(&self, x: usize, y: usize) -> &[f64] {
        let o = self.slice_offset(x, y);
        &self.costs[o..o + self.window * self.window]
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, dx: i64, dy: i64) -> f64 {
        let r = self.radius();
        debug_assert!(dx.abs() <= r && dy.abs() <= r);
        let o = self.slice_offset(x, y);
        self.costs[o + ((dy + r) as usize) * self.window + (dx + r) as usize]
    }

    /// Pixels whose epipolar line was degenerate during injection.
    pub fn epi_skipped(&self, x: usize, y: usize) -> bool {
        self.epi_skipped[y * self.width + x]
    }

    pub fn from_raw(width: usize, height: usize, window: usize, costs: Vec<f64>) -> Self {
        assert!(window % 2 == 1 && window >= 3);
        assert_eq!(costs.len(), width * height * window * window);
        Self { width, height, window, costs, epi_skipped: vec![false; width * height] }
    }
}

/// Zero-mean, unit-norm patch descriptors; flat patches get the zero
/// descriptor so they match nothing better than cost 1.
fn descriptors(img: &crate::imageops::GrayImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h * PATCH_LEN];
    out.par_chunks_mut(PATCH_LEN).enumerate().for_each(|(i, d)| {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let mut k = 0;
        let mut mean = 0.0;
        for dy in -(PATCH_RADIUS as i64)..=PATCH_RADIUS as i64 {
            for dx in -(PATCH_RADIUS as i64)..=PATCH_RADIUS as i64 {
                d[k] = img.get_clamped(x + dx, y + dy);
                mean += d[k];
                k += 1;
            }
        }
        mean /= PATCH_LEN as f64;
        let mut norm_sq = 0.0;
        for v in d.iter_mut() {
            *v -= mean;
            norm_sq += *v * *v;
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-12 {
            d.fill(0.0);
        } else {
            for v in d.iter_mut() {
                *v /= norm;
            }
        }
    });
    out
}

pub fn build_cost_volume(
    img1: &crate::imageops::GrayImage,
    img2: &crate::imageops::GrayImage,
    window: usize,
) -> Result<CostVolume, FlowError> {
    if img1.width() != img2.width() || img1.height() != img2.height() {
        return Err(FlowError::MismatchedSizes {
            a: (img1.width(), img1.height()),
            b: (img2.width(), img2.height()),
        });
    }
    if window % 2 == 0 || window < 3 {
        return Err(FlowError::InvalidWindow(window));
    }
    let (w, h) = (img1.width(), img1.height());
    let d1 = descriptors(img1);
    let d2 = descriptors(img2);
    let radius = (window as i64 - 1) / 2;
    let mut costs = vec![0.0; w * h * window * window];
    costs.par_chunks_mut(window * window).enumerate().for_each(|(i, slice)| {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let f1 = &d1[i * PATCH_LEN..(i + 1) * PATCH_LEN];
        let mut k = 0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (qx, qy) = (x + dx, y + dy);
                slice[k] = if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                    1.0
                } else {
                    let j = (qy as usize * w + qx as usize) * PATCH_LEN;
                    let f2 = &d2[j..j + PATCH_LEN];
                    let dot: f64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
                    (1.0 - dot).clamp(0.0, 1.0)
                };
                k += 1;
            }
        }
    });
    Ok(CostVolume { width: w, height: h, window, costs, epi_skipped: vec![false; w * h] })
}

/// Adds min(gain * d_E^2, truncation) per candidate, where d_E is the
/// candidate's distance to the source pixel's epipolar line.
pub fn inject_epipolar_cost(
    mut vol: CostVolume,
    f: &Matrix3<f64>,
    gain: f64,
    truncation: f64,
) -> CostVolume {
    debug_assert!(gain > 0.0 && truncation > 0.0);
    let (w, window) = (vol.width, vol.window);
    let radius = (window as i64 - 1) / 2;
    let skipped: Vec<bool> = vol
        .costs
        .par_chunks_mut(window * window)
        .enumerate()
        .map(|(i, slice)| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let line = epipolar_line(f, Pixel2::new(x as f64, y as f64));
            if line.is_degenerate() {
                return true;
            }
            let mut k = 0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let q = Pixel2::new((x + dx) as f64, (y + dy) as f64);
                    let d_e = point_line_euclidean(q, &line).expect("line checked");
                    slice[k] += (gain * d_e * d_e).min(truncation);
                    k += 1;
                }
            }
            false
        })
        .collect();
    vol.epi_skipped = skipped;
    vol
}

/// In-place L1 min-convolution over the D x D displacement grid:
/// out[d] = min_d' (buf[d'] + slope * |d - d'|_1). Two sweeps per axis.
fn min_convolve_l1(buf: &mut [f64], window: usize, slope: f64) {
    for row in buf.chunks_mut(window) {
        for i in 1..window {
            row[i] = row[i].min(row[i - 1] + slope);
        }
        for i in (0..window - 1).rev() {
            row[i] = row[i].min(row[i + 1] + slope);
        }
    }
    for col in 0..window {
        for i in 1..window {
            let prev = buf[(i - 1) * window + col] + slope;
            let cur = &mut buf[i * window + col];
            *cur = cur.min(prev);
        }
        for i in (0..window - 1).rev() {
            let next = buf[(i + 1) * window + col] + slope;
            let cur = &mut buf[i * window + col];
            *cur = cur.min(next);
        }
    }
}

/// Four-direction scanline aggregation with a linear penalty on the
/// displacement difference between neighbors. The running minimum is
/// subtracted per step so smoothness = 0 reproduces the input exactly.
pub fn regularize(vol: CostVolume, smoothness: f64) -> CostVolume {
    assert!(smoothness >= 0.0);
    if smoothness == 0.0 {
        return vol;
    }
    let (w, h, window) = (vol.width, vol.height, vol.window);
    let n = window * window;
    let mut acc = vec![0.0; vol.costs.len()];

    // Horizontal passes: rows are independent.
    for &reverse in &[false, true] {
        let mut dir = vec![0.0; vol.costs.len()];
        dir.par_chunks_mut(w * n)
            .enumerate()
            .for_each(|(y, row_out)| scan_line(&vol.costs[y * w * n..(y + 1) * w * n], row_out, w, n, window, smoothness, reverse));
        for (a, d) in acc.iter_mut().zip(&dir) {
            *a += d;
        }
    }
    // Vertical passes: columns are independent; gather column slices.
    for &reverse in &[false, true] {
        let mut dir = vec![0.0; vol.costs.len()];
        let col_results: Vec<Vec<f64>> = (0..w)
            .into_par_iter()
            .map(|x| {
                let mut col_costs = vec![0.0; h * n];
                for y in 0..h {
                    let o = (y * w + x) * n;
                    col_costs[y * n..(y + 1) * n].copy_from_slice(&vol.costs[o..o + n]);
                }
                let mut col_out = vec![0.0; h * n];
                scan_line(&col_costs, &mut col_out, h, n, window, smoothness, reverse);
                col_out
            })
            .collect();
        for (x, col_out) in col_results.iter().enumerate() {
            for y in 0..h {
                let o = (y * w + x) * n;
                dir[o..o + n].copy_from_slice(&col_out[y * n..(y + 1) * n]);
            }
        }
        for (a, d) in acc.iter_mut().zip(&dir) {
            *a += d;
        }
    }
    for a in &mut acc {
        *a *= 0.25;
    }
    CostVolume { width: w, height: h, window, costs: acc, epi_skipped: vol.epi_skipped }
}

/// One scanline of cost aggregation over `len` pixels whose slices are
/// consecutive `n`-sized chunks of `costs`.
fn scan_line(
    costs: &[f64],
    out: &mut [f64],
    len: usize,
    n: usize,
    window: usize,
    slope: f64,
    reverse: bool,
) {
    let mut prev = vec![0.0; n];
    let order: Box<dyn Iterator<Item = usize>> =
        if reverse { Box::new((0..len).rev()) } else { Box::new(0..len) };
    for (step, i) in order.enumerate() {
        let src = &costs[i * n..(i + 1) * n];
        let dst = &mut out[i * n..(i + 1) * n];
        if step == 0 {
            dst.copy_from_slice(src);
        } else {
            let min_prev = prev.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut m = prev.clone();
            min_convolve_l1(&mut m, window, slope);
            for k in 0..n {
                dst[k] = src[k] + m[k] - min_prev;
            }
        }
        prev.copy_from_slice(dst);
    }
}

/// Per-pixel argmin over the displacement window. Ties break toward the
/// smaller displacement magnitude, then scan order in (dy, dx).
pub fn extract_flow(vol: &CostVolume) -> FlowField {
    let (w, h, window) = (vol.width, vol.height, vol.window);
    let radius = (window as i64 - 1) / 2;
    let flow: Vec<[f64; 2]> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let slice = &vol.costs[i * window * window..(i + 1) * window * window];
            let mut best = (f64::INFINITY, i64::MAX, [0.0, 0.0]);
            let mut k = 0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let mag = dx * dx + dy * dy;
                    let c = slice[k];
                    if c < best.0 || (c == best.0 && mag < best.1) {
                        best = (c, mag, [dx as f64, dy as f64]);
                    }
                    k += 1;
                }
            }
            best.2
        })
        .collect();
    FlowField::from_parts(w, h, flow)
}

/// Parabolic sub-pixel refinement of an integer argmin field. Per axis,
/// a parabola through the three costs straddling the minimum shifts the
/// displacement by its vertex offset, clamped to half a cell. Pixels at
/// the window border, on non-convex costs, or invalid are left alone.
pub fn refine_subpixel(vol: &CostVolume, flow: &mut FlowField) {
    assert_eq!((vol.width, vol.height), (flow.width(), flow.height()));
    let radius = vol.radius();
    for y in 0..vol.height {
        for x in 0..vol.width {
            if !flow.is_valid(x, y) {
                continue;
            }
            let f = flow.flow_at(x, y);
            let (dx, dy) = (f[0].round() as i64, f[1].round() as i64);
            if dx.abs() >= radius || dy.abs() >= radius {
                continue;
            }
            let c0 = vol.cost(x, y, dx, dy);
            let mut out = [dx as f64, dy as f64];
            let (cm, cp) = (vol.cost(x, y, dx - 1, dy), vol.cost(x, y, dx + 1, dy));
            let denom = cm - 2.0 * c0 + cp;
            if denom > 1e-12 {
                out[0] += ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
            }
            let (cm, cp) = (vol.cost(x, y, dx, dy - 1), vol.cost(x, y, dx, dy + 1));
            let denom = cm - 2.0 * c0 + cp;
            if denom > 1e-12 {
                out[1] += ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
            }
            flow.set_flow(x, y, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::GrayImage;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn self_match_costs_zero() {
        let img = textured(16, 12, 1);
        let vol = build_cost_volume(&img, &img, 5).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                assert!(vol.cost(x, y, 0, 0) < 1e-12, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn orthogonal_descriptors_cost_one() {
        // Vertical stripes against horizontal stripes: zero-mean patch
        // dot products vanish by symmetry.
        let a = GrayImage::from_fn(16, 16, |x, _| (x % 2) as f64);
        let b = GrayImage::from_fn(16, 16, |_, y| (y % 2) as f64);
        let vol = build_cost_volume(&a, &b, 3).unwrap();
        assert_relative_eq!(vol.cost(8, 8, 0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cost_matches_direct_dot_product() {
        let a = textured(14, 11, 2);
        let b = textured(14, 11, 3);
        let vol = build_cost_volume(&a, &b, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x = rng.gen_range(0..14usize);
            let y = rng.gen_range(0..11usize);
            let dx = rng.gen_range(-2..=2i64);
            let dy = rng.gen_range(-2..=2i64);
            let (qx, qy) = (x as i64 + dx, y as i64 + dy);
            if qx < 0 || qy < 0 || qx >= 14 || qy >= 11 {
                assert_eq!(vol.cost(x, y, dx, dy), 1.0);
                continue;
            }
            let patch = |img: &GrayImage, cx: i64, cy: i64| {
                let r = PATCH_RADIUS as i64;
                let mut v = Vec::new();
                for py in -r..=r {
                    for px in -r..=r {
                        v.push(img.get_clamped(cx + px, cy + py));
                    }
                }
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                for e in &mut v {
                    *e -= mean;
                }
                let n = v.iter().map(|e| e * e).sum::<f64>().sqrt();
                for e in &mut v {
                    *e /= n;
                }
                v
            };
            let f1 = patch(&a, x as i64, y as i64);
            let f2 = patch(&b, qx, qy);
            let dot: f64 = f1.iter().zip(&f2).map(|(p, q)| p * q).sum();
            let expected = (1.0 - dot).clamp(0.0, 1.0);
            assert_relative_eq!(vol.cost(x, y, dx, dy), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn injection_on_line_is_identity_and_truncates_far_away() {
        let img = textured(12, 12, 5);
        let vol = build_cost_volume(&img, &img, 7).unwrap();
        // Horizontal epipolar lines: l = F * x~ = (0, -1, v).
        let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let before: Vec<f64> = vol.slice(6, 6).to_vec();
        let out = inject_epipolar_cost(vol, &f, 0.1, 0.5);
        // Candidates on the line (dy = 0) keep their cost.
        for dx in -3..=3 {
            let k = (3 * 7 + dx + 3) as usize;
            assert_relative_eq!(out.cost(6, 6, dx, 0), before[k], epsilon = 1e-12);
        }
        // d_E = 3 => 0.1 * 9 = 0.9 > 0.5: truncated increase.
        let k = (0 * 7 + 3) as usize;
        assert_relative_eq!(out.cost(6, 6, 0, -3), before[k] + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn injection_hand_value() {
        // One pixel, window 11: candidate at d_E = 5 with gain 0.01 gains 0.25.
        let img = textured(13, 13, 6);
        let vol = build_cost_volume(&img, &img, 11).unwrap();
        let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let before = vol.cost(6, 6, 0, 5);
        let out = inject_epipolar_cost(vol, &f, 0.01, 0.5);
        assert_relative_eq!(out.cost(6, 6, 0, 5), before + 0.25, epsilon = 1e-12);
    }

    #[test]
    fn injection_never_decreases_and_caps_at_truncation() {
        let a = textured(10, 9, 7);
        let b = textured(10, 9, 8);
        let vol = build_cost_volume(&a, &b, 5).unwrap();
        let before = vol.costs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let tau = 0.4;
        let out = inject_epipolar_cost(vol, &f, 0.05, tau);
        for (i, (&a, &b)) in before.iter().zip(&out.costs).enumerate() {
            assert!(b >= a - 1e-15, "cost decreased at {i}");
            assert!(b <= a + tau + 1e-15, "cost rose above truncation at {i}");
        }
    }

    #[test]
    fn degenerate_line_slice_left_unmodified() {
        let img = textured(8, 8, 10);
        let vol = build_cost_volume(&img, &img, 3).unwrap();
        let before = vol.costs.clone();
        let out = inject_epipolar_cost(vol, &Matrix3::zeros(), 0.01, 0.5);
        assert_eq!(before, out.costs);
        assert!(out.epi_skipped(4, 4));
    }

    #[test]
    fn regularize_zero_smoothness_is_identity() {
        let a = textured(9, 7, 11);
        let b = textured(9, 7, 12);
        let vol = build_cost_volume(&a, &b, 5).unwrap();
        let before = vol.costs.clone();
        let out = regularize(vol, 0.0);
        assert_eq!(before, out.costs);
    }

    #[test]
    fn regularize_keeps_constant_shift_argmin() {
        // img2 is img1 shifted right by 2: flow is (2, 0) everywhere inside.
        let a = textured(24, 16, 13);
        let b = GrayImage::from_fn(24, 16, |x, y| a.get_clamped(x as i64 - 2, y as i64));
        let vol = build_cost_volume(&a, &b, 7).unwrap();
        let smooth = regularize(vol, 0.05);
        let field = extract_flow(&smooth);
        for y in 4..12 {
            for x in 4..18 {
                assert_eq!(field.flow_at(x, y), [2.0, 0.0], "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn regularize_pulls_outlier_toward_neighbors() {
        // 3x3 grid, window 3. All pixels prefer displacement (1, 0) with
        // cost 0 except the center, which prefers (-1, 0).
        let (w, h, window) = (3usize, 3usize, 3usize);
        let n = window * window;
        let mut costs = vec![1.0; w * h * n];
        let idx = |dx: i64, dy: i64| ((dy + 1) * 3 + dx + 1) as usize;
        for p in 0..w * h {
            if p == 4 {
                costs[p * n + idx(-1, 0)] = 0.0;
                costs[p * n + idx(1, 0)] = 0.9;
            } else {
                costs[p * n + idx(1, 0)] = 0.0;
            }
        }
        let vol = CostVolume::from_raw(w, h, window, costs.clone());
        let smoothness = 0.5;
        let out = regularize(vol, smoothness);

        // Exhaustive oracle: recompute the four directional aggregations.
        let mut expected = vec![0.0; w * h * n];
        let l1 = |a: usize, b: usize| {
            let (ax, ay) = ((a % 3) as i64, (a / 3) as i64);
            let (bx, by) = ((b % 3) as i64, (b / 3) as i64);
            ((ax - bx).abs() + (ay - by).abs()) as f64
        };
        let dirs: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        for (dx, dy) in dirs {
            // Walk each scanline in direction (dx, dy).
            let starts: Vec<(i64, i64)> = (0..w as i64)
                .flat_map(|x| (0..h as i64).map(move |y| (x, y)))
                .filter(|&(x, y)| {
                    let (px, py) = (x - dx, y - dy);
                    px < 0 || py < 0 || px >= w as i64 || py >= h as i64
                })
                .collect();
            for (sx, sy) in starts {
                let (mut x, mut y) = (sx, sy);
                let mut prev: Option<Vec<f64>> = None;
                while x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    let p = (y as usize) * w + x as usize;
                    let mut cur = vec![0.0; n];
                    for d in 0..n {
                        cur[d] = costs[p * n + d]
                            + match &prev {
                                None => 0.0,
                                Some(pr) => {
                                    let mn =
                                        pr.iter().cloned().fold(f64::INFINITY, f64::min);
                                    let best = (0..n)
                                        .map(|d2| pr[d2] + smoothness * l1(d, d2))
                                        .fold(f64::INFINITY, f64::min);
                                    best - mn
                                }
                            };
                    }
                    for d in 0..n {
                        expected[p * n + d] += cur[d] * 0.25;
                    }
                    prev = Some(cur);
                    x += dx;
                    y += dy;
                }
            }
        }
        for (i, (&got, &want)) in out.costs.iter().zip(&expected).enumerate() {
            assert_relative_eq!(got, want, epsilon = 1e-12, max_relative = 1e-12);
            let _ = i;
        }
        // The center argmin moved to the neighbors' displacement.
        let field = extract_flow(&out);
        assert_eq!(field.flow_at(1, 1), [1.0, 0.0]);
    }

    #[test]
    fn extract_zero_flow_on_identical_images() {
        let img = textured(10, 10, 14);
        let vol = build_cost_volume(&img, &img, 5).unwrap();
        let field = extract_flow(&vol);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(field.flow_at(x, y), [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn extract_recovers_integer_shift() {
        let a = textured(32, 20, 15);
        let b = GrayImage::from_fn(32, 20, |x, y| {
            a.get_clamped(x as i64 - 3, y as i64 - 1)
        });
        let vol = build_cost_volume(&a, &b, 9).unwrap();
        let field = extract_flow(&vol);
        for y in 5..14 {
            for x in 5..26 {
                assert_eq!(field.flow_at(x, y), [3.0, 1.0], "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn extract_tie_breaks_to_zero_displacement() {
        let vol = CostVolume::from_raw(2, 2, 3, vec![0.25; 2 * 2 * 9]);
        let field = extract_flow(&vol);
        assert_eq!(field.flow_at(0, 0), [0.0, 0.0]);
        assert_eq!(field.flow_at(1, 1), [0.0, 0.0]);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let a = GrayImage::new(4, 4);
        let b = GrayImage::new(5, 4);
        assert!(matches!(
            build_cost_volume(&a, &b, 3),
            Err(FlowError::MismatchedSizes { .. })
        ));
        assert!(matches!(build_cost_volume(&a, &a, 4), Err(FlowError::InvalidWindow(4))));
    }

    fn quadratic_volume(w: usize, h: usize, window: usize, center: (f64, f64)) -> CostVolume {
        let radius = (window as i64 - 1) / 2;
        let mut costs = Vec::with_capacity(w * h * window * window);
        for _ in 0..w * h {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let px = dx as f64 - center.0;
                    let py = dy as f64 - center.1;
                    costs.push(0.1 * (px * px + py * py));
                }
            }
        }
        CostVolume::from_raw(w, h, window, costs)
    }

    #[test]
    fn subpixel_recovers_fractional_vertex_exactly() {
        // A parabola through three samples of an exact quadratic lands on
        // the true vertex, so the refinement has no model error here.
        let vol = quadratic_volume(3, 2, 7, (1.3, -0.4));
        let mut flow = extract_flow(&vol);
        assert_eq!(flow.flow_at(1, 1), [1.0, 0.0]);
        refine_subpixel(&vol, &mut flow);
        let f = flow.flow_at(1, 1);
        assert_relative_eq!(f[0], 1.3, epsilon = 1e-12);
        assert_relative_eq!(f[1], -0.4, epsilon = 1e-12);
    }

    #[test]
    fn subpixel_leaves_border_minima_alone() {
        // Vertex outside the window pins the argmin to the border, where
        // one-sided neighbors would be missing.
        let vol = quadratic_volume(2, 2, 5, (3.7, 0.0));
        let mut flow = extract_flow(&vol);
        assert_eq!(flow.flow_at(0, 0), [2.0, 0.0]);
        refine_subpixel(&vol, &mut flow);
        assert_eq!(flow.flow_at(0, 0), [2.0, 0.0]);
    }

    #[test]
    fn subpixel_skips_invalid_and_flat_pixels() {
        let flat = CostVolume::from_raw(2, 1, 5, vec![0.3; 2 * 25]);
        let mut flow = extract_flow(&flat);
        flow.invalidate(1, 0);
        refine_subpixel(&flat, &mut flow);
        assert_eq!(flow.flow_at(0, 0), [0.0, 0.0]);
        assert_eq!(flow.flow_at(1, 0), [0.0, 0.0]);
    }

    #[test]
    fn subpixel_offset_never_exceeds_half_a_cell() {
        let a = textured(24, 18, 21);
        let b = GrayImage::from_fn(24, 18, |x, y| a.get_clamped(x as i64 - 2, y as i64));
        let vol = build_cost_volume(&a, &b, 7).unwrap();
        let mut flow = extract_flow(&vol);
        let before: Vec<[f64; 2]> = (0..18 * 24)
            .map(|i| flow.flow_at(i % 24, i / 24))
            .collect();
        refine_subpixel(&vol, &mut flow);
        for (i, b0) in before.iter().enumerate() {
            let f = flow.flow_at(i % 24, i / 24);
            assert!((f[0] - b0[0]).abs() <= 0.5 + 1e-12);
            assert!((f[1] - b0[1]).abs() <= 0.5 + 1e-12);
        }
    }
}
