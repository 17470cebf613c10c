//! Flow field serialization and color-wheel rendering.
//!
//! File layout (little endian), planes row-major:
//!   bytes 0..8   magic "FLOWUNC1"
//!   bytes 8..16  width u32, height u32
//!   f32 planes   flow_u, flow_v, yxx, yxy, yyy
//!   u8 plane     validity (0 or 1)

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::FlowField;
use crate::uncertainty::InfoMatrix2;

pub const FLOW_MAGIC: &[u8; 8] = b"FLOWUNC1";

#[derive(Debug, Error)]
pub enum FlowIoError {
    #[error("flow file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("flow file {path}: bad magic")]
    BadMagic { path: String },
    #[error("flow file {path}: truncated")]
    Truncated { path: String },
}

pub fn write_flow_file(path: &Path, field: &FlowField) -> Result<(), FlowIoError> {
    let wrap = |source| FlowIoError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    w.write_all(FLOW_MAGIC).map_err(wrap)?;
    w.write_all(&(field.width() as u32).to_le_bytes()).map_err(wrap)?;
    w.write_all(&(field.height() as u32).to_le_bytes()).map_err(wrap)?;
    let plane = |get: &dyn Fn(usize, usize) -> f32| -> Vec<u8> {
        let mut buf = Vec::with_capacity(field.width() * field.height() * 4);
        for y in 0..field.height() {
            for x in 0..field.width() {
                buf.extend_from_slice(&get(x, y).to_le_bytes());
            }
        }
        buf
    };
    w.write_all(&plane(&|x, y| field.flow_at(x, y)[0] as f32)).map_err(wrap)?;
    w.write_all(&plane(&|x, y| field.flow_at(x, y)[1] as f32)).map_err(wrap)?;
    w.write_all(&plane(&|x, y| field.info_at(x, y).yxx as f32)).map_err(wrap)?;
    w.write_all(&plane(&|x, y| field.info_at(x, y).yxy as f32)).map_err(wrap)?;
    w.write_all(&plane(&|x, y| field.info_at(x, y).yyy as f32)).map_err(wrap)?;
    let mut mask = Vec::with_capacity(field.width() * field.height());
    for y in 0..field.height() {
        for x in 0..field.width() {
            mask.push(field.is_valid(x, y) as u8);
        }
    }
    w.write_all(&mask).map_err(wrap)?;
    w.flush().map_err(wrap)
}

pub fn read_flow_file(path: &Path) -> Result<FlowField, FlowIoError> {
    let wrap = |source| FlowIoError::Io { path: path.display().to_string(), source };
    let mut r = BufReader::new(File::open(path).map_err(wrap)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(wrap)?;
    if &magic != FLOW_MAGIC {
        return Err(FlowIoError::BadMagic { path: path.display().to_string() });
    }
    let mut dims = [0u8; 8];
    r.read_exact(&mut dims).map_err(wrap)?;
    let w = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
    let n = w * h;
    let mut read_plane = |out: &mut Vec<f32>| -> Result<(), FlowIoError> {
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)
            .map_err(|_| FlowIoError::Truncated { path: path.display().to_string() })?;
        out.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
        Ok(())
    };
    let mut planes: Vec<Vec<f32>> = Vec::new();
    for _ in 0..5 {
        let mut p = Vec::with_capacity(n);
        read_plane(&mut p)?;
        planes.push(p);
    }
    let mut mask = vec![0u8; n];
    let mut r = r;
    r.read_exact(&mut mask)
        .map_err(|_| FlowIoError::Truncated { path: path.display().to_string() })?;

    let flow: Vec<[f64; 2]> =
        (0..n).map(|i| [planes[0][i] as f64, planes[1][i] as f64]).collect();
    let mut field = FlowField::from_parts(w, h, flow);
    let infos: Vec<InfoMatrix2> = (0..n)
        .map(|i| InfoMatrix2::new(planes[2][i] as f64, planes[3][i] as f64, planes[4][i] as f64))
        .collect();
    field.set_infos(infos);
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] == 0 {
                field.invalidate_keep_info(x, y);
            }
        }
    }
    Ok(field)
}

/// Middlebury-style color wheel segment sizes.
const SEGMENTS: [(usize, [f64; 3], [f64; 3]); 6] = [
    (15, [255.0, 0.0, 0.0], [255.0, 255.0, 0.0]),
    (6, [255.0, 255.0, 0.0], [0.0, 255.0, 0.0]),
    (4, [0.0, 255.0, 0.0], [0.0, 255.0, 255.0]),
    (11, [0.0, 255.0, 255.0], [0.0, 0.0, 255.0]),
    (13, [0.0, 0.0, 255.0], [255.0, 0.0, 255.0]),
    (6, [255.0, 0.0, 255.0], [255.0, 0.0, 0.0]),
];

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::new();
    for (len, from, to) in SEGMENTS {
        for i in 0..len {
            let t = i as f64 / len as f64;
            wheel.push([
                from[0] + (to[0] - from[0]) * t,
                from[1] + (to[1] - from[1]) * t,
                from[2] + (to[2] - from[2]) * t,
            ]);
        }
    }
    wheel
}

/// Renders flow to interleaved RGB; invalid pixels are black. Magnitudes
/// normalize against the valid maximum unless `max_mag` is given.
pub fn flow_to_rgb(field: &FlowField, max_mag: Option<f64>) -> Vec<u8> {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let max_rad = max_mag.unwrap_or_else(|| {
        field.valid_magnitudes().into_iter().fold(0.0f64, f64::max).max(1e-9)
    });
    let mut rgb = Vec::with_capacity(field.width() * field.height() * 3);
    for y in 0..field.height() {
        for x in 0..field.width() {
            if !field.is_valid(x, y) {
                rgb.extend_from_slice(&[0, 0, 0]);
                continue;
            }
            let f = field.flow_at(x, y);
            let rad = (f[0].hypot(f[1]) / max_rad).min(1.0);
            let angle = (-f[1]).atan2(-f[0]) / std::f64::consts::PI;
            let fk = (angle + 1.0) / 2.0 * (ncols - 1) as f64;
            let k0 = (fk.floor() as usize) % ncols;
            let k1 = (k0 + 1) % ncols;
            let t = fk - fk.floor();
            for ch in 0..3 {
                let col = (wheel[k0][ch] + (wheel[k1][ch] - wheel[k0][ch]) * t) / 255.0;
                let shaded = 1.0 - rad * (1.0 - col);
                rgb.push((shaded * 255.0).round() as u8);
            }
        }
    }
    rgb
}

pub fn write_flow_png(path: &Path, field: &FlowField) -> Result<(), crate::imageops::ImageIoError> {
    let rgb = flow_to_rgb(field, None);
    crate::imageops::save_rgb_png(path, field.width(), field.height(), &rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flow");
        let mut field = FlowField::from_parts(5, 4, vec![[1.25, -0.5]; 20]);
        field.set_info(2, 1, InfoMatrix2::new(0.5, 0.125, 0.25));
        field.invalidate(4, 3);
        write_flow_file(&path, &field).unwrap();
        let back = read_flow_file(&path).unwrap();
        assert_eq!((back.width(), back.height()), (5, 4));
        assert_eq!(back.flow_at(0, 0), [1.25, -0.5]);
        assert_eq!(back.info_at(2, 1), InfoMatrix2::new(0.5, 0.125, 0.25));
        assert!(!back.is_valid(4, 3));
        assert!(back.is_valid(0, 0));
    }

    #[test]
    fn read_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.flow");
        std::fs::write(&path, b"NOTAFLOW0000000000000000").unwrap();
        assert!(matches!(read_flow_file(&path), Err(FlowIoError::BadMagic { .. })));
    }

    #[test]
    fn read_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.flow");
        let field = FlowField::from_parts(4, 4, vec![[0.0, 0.0]; 16]);
        write_flow_file(&path, &field).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_flow_file(&path), Err(FlowIoError::Truncated { .. })));
    }

    #[test]
    fn zero_flow_renders_white() {
        let field = FlowField::from_parts(3, 3, vec![[0.0, 0.0]; 9]);
        let rgb = flow_to_rgb(&field, Some(1.0));
        assert_eq!(rgb.len(), 27);
        for px in rgb.chunks(3) {
            assert_eq!(px, &[255, 255, 255]);
        }
    }
}
