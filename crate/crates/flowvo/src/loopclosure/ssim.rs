//! Structural-similarity score between two grayscale frames, used to gate
//! loop-closure candidates on appearance before spending a dense-flow
//! verification on them.

use crate::imageops::GrayImage;

use super::LoopError;

const C1: f64 = 1e-4;
const C2: f64 = 9e-4;
const SIGMA: f64 = 1.5;
const RADIUS: usize = 5;

/// Mean of the per-pixel SSIM map computed from Gaussian-windowed local
/// statistics. Intensities are expected in [0, 1]; the score lies in
/// [-1, 1], is symmetric in its arguments, and is exactly 1 for
/// identical images.
pub fn mean_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, LoopError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(LoopError::SizeMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    let (w, h) = (a.width(), a.height());
    let product = |p: &GrayImage, q: &GrayImage| {
        GrayImage::from_fn(w, h, |x, y| p.get(x, y) * q.get(x, y))
    };

    let mu_a = a.gaussian_blurred(SIGMA, RADIUS);
    let mu_b = b.gaussian_blurred(SIGMA, RADIUS);
    let e_aa = product(a, a).gaussian_blurred(SIGMA, RADIUS);
    let e_bb = product(b, b).gaussian_blurred(SIGMA, RADIUS);
    let e_ab = product(a, b).gaussian_blurred(SIGMA, RADIUS);

    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (ma, mb) = (mu_a.get(x, y), mu_b.get(x, y));
            let va = e_aa.get(x, y) - ma * ma;
            let vb = e_bb.get(x, y) - mb * mb;
            let cab = e_ab.get(x, y) - ma * mb;
            let num = (2.0 * ma * mb + C1) * (2.0 * cab + C2);
            let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
            acc += num / den;
        }
    }
    Ok(acc / (w * h) as f64)
}
