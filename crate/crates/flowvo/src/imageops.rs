//! Grayscale images stored as f64 intensities in [0, 1], plus the
//! resampling and filtering helpers used by flow, corners, and SSIM.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read image {path}: {source}")]
    Read { path: String, source: image::ImageError },
    #[error("cannot write image {path}: {source}")]
    Write { path: String, source: image::ImageError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Border-replicating read.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(cx, cy)
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageIoError> {
        let img = image::open(path)
            .map_err(|source| ImageIoError::Read { path: path.display().to_string(), source })?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.as_raw().iter().map(|&p| p as f64 / 255.0).collect();
        Ok(Self { width: w, height: h, data })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageIoError> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer sized to dimensions");
        img.save(path)
            .map_err(|source| ImageIoError::Write { path: path.display().to_string(), source })
    }

    /// Box-filter downsampling by an integer factor; output dims are floored.
    pub fn downscale(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let w = self.width / factor;
        let h = self.height / factor;
        let inv = 1.0 / (factor * factor) as f64;
        let mut out = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += self.get(x * factor + dx, y * factor + dy);
                    }
                }
                out.set(x, y, acc * inv);
            }
        }
        out
    }

    /// Separable Gaussian blur with border replication.
    pub fn gaussian_blurred(&self, sigma: f64, radius: usize) -> Self {
        let kernel = gaussian_kernel(sigma, radius);
        let mut tmp = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    let sx = x as i64 + i as i64 - radius as i64;
                    acc += k * self.get_clamped(sx, y as i64);
                }
                tmp.set(x, y, acc);
            }
        }
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    let sy = y as i64 + i as i64 - radius as i64;
                    acc += k * tmp.get_clamped(x as i64, sy);
                }
                out.set(x, y, acc);
            }
        }
        out
    }

    /// Sobel gradients (d/dx, d/dy).
    pub fn sobel(&self) -> (Self, Self) {
        let mut gx = Self::new(self.width, self.height);
        let mut gy = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (xi, yi) = (x as i64, y as i64);
                let p = |dx: i64, dy: i64| self.get_clamped(xi + dx, yi + dy);
                let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                    - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                    - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
                gx.set(x, y, sx * 0.125);
                gy.set(x, y, sy * 0.125);
            }
        }
        (gx, gy)
    }
}

pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    assert!(sigma > 0.0);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Writes an interleaved 8-bit RGB buffer as PNG.
pub fn save_rgb_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<(), ImageIoError> {
    assert_eq!(rgb.len(), width * height * 3);
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb.to_vec())
        .expect("buffer sized to dimensions");
    img.save(path)
        .map_err(|source| ImageIoError::Write { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn downscale_averages_blocks() {
        let img = GrayImage::from_vec(4, 2, vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 0.5, 0.5]);
        let half = img.downscale(2);
        assert_eq!((half.width(), half.height()), (2, 1));
        assert_relative_eq!(half.get(0, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(half.get(1, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_preserves_constant_images() {
        let img = GrayImage::from_fn(9, 7, |_, _| 0.42);
        let blurred = img.gaussian_blurred(1.5, 5);
        for &v in blurred.data() {
            assert_relative_eq!(v, 0.42, epsilon = 1e-12);
        }
    }

    #[test]
    fn sobel_detects_horizontal_ramp() {
        let img = GrayImage::from_fn(8, 8, |x, _| x as f64 / 8.0);
        let (gx, gy) = img.sobel();
        assert_relative_eq!(gx.get(4, 4), 1.0 / 8.0, epsilon = 1e-12);
        assert_relative_eq!(gy.get(4, 4), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = GrayImage::from_fn(17, 13, |x, y| ((x * 31 + y * 7) % 256) as f64 / 255.0);
        img.save_png(&path).unwrap();
        let back = GrayImage::load_png(&path).unwrap();
        assert_eq!(back.width(), 17);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 0.5 / 255.0 + 1e-12);
        }
    }
}
