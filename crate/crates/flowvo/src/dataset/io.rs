//! Odometry-benchmark directory layout:
//!   calib.txt          "P0:" followed by the 12 entries of K[I|0], row-major
//!   poses.txt          12 floats per line, camera-to-world [R|t], row-major
//!   image_0/           zero-padded frame PNGs
//!   observations.txt   optional sparse oracle: frame point u v yxx yxy yyy
//!
//! Floats are written with the shortest round-trip representation, so a
//! write/read cycle reproduces every value bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{CameraIntrinsics, Pixel2, PoseSE3};
use crate::imageops::GrayImage;
use crate::uncertainty::InfoMatrix2;

use super::render::{render_ground_view, RenderConfig};
use super::traj::{Observation, SyntheticScene};
use super::DatasetError;

#[derive(Debug, Clone)]
pub struct Sequence {
    pub root: PathBuf,
    pub image_paths: Vec<PathBuf>,
    pub intrinsics: CameraIntrinsics,
    pub poses: Option<Vec<PoseSE3>>,
    pub observations: Option<Vec<Observation>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        if let Some(poses) = &self.poses {
            return poses.len();
        }
        self.image_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load_image(&self, index: usize) -> Result<GrayImage, DatasetError> {
        let path = &self.image_paths[index];
        GrayImage::load_png(path).map_err(|e| {
            DatasetError::io(path.clone(), std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
        })
    }
}

fn parse_fields(path: &Path, line_no: usize, line: &str, want: usize) -> Result<Vec<f64>, DatasetError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != want {
        return Err(DatasetError::parse(
            path,
            line_no,
            format!("expected {want} numeric fields, got {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| DatasetError::parse(path, line_no, format!("not a number: {f}")))
        })
        .collect()
}

fn pose_from_row_major(path: &Path, line_no: usize, v: &[f64]) -> Result<PoseSE3, DatasetError> {
    let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let t = Vector3::new(v[3], v[7], v[11]);
    if (r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9 {
        PoseSE3::from_parts(r, t)
            .map_err(|e| DatasetError::parse(path, line_no, e.to_string()))
    } else {
        // Accept slightly denormalized rotations from external tools.
        Ok(PoseSE3::from_parts_projected(r, t))
    }
}

fn pose_line(pose: &PoseSE3) -> String {
    let r = pose.rotation.matrix();
    let t = pose.translation;
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} {}",
        r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
        r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
        r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
    )
}

pub fn write_trajectory(path: &Path, poses: &[PoseSE3]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for pose in poses {
        out.push_str(&pose_line(pose));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DatasetError::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<PoseSE3>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v = parse_fields(path, i + 1, line, 12)?;
        poses.push(pose_from_row_major(path, i + 1, &v)?);
    }
    Ok(poses)
}

pub fn write_calibration(path: &Path, k: &CameraIntrinsics) -> Result<(), DatasetError> {
    let line = format!(
        "P0: {} {} {} 0 0 {} {} 0 0 0 1 0\n",
        k.fx, k.skew, k.cx, k.fy, k.cy
    );
    fs::write(path, line).map_err(|e| DatasetError::io(path, e))
}

pub fn read_calibration(path: &Path) -> Result<CameraIntrinsics, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            return DatasetError::MissingFile(path.to_path_buf());
        }
        DatasetError::io(path, e)
    })?;
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("P0:") {
            let v = parse_fields(path, i + 1, rest, 12)?;
            if v[0] <= 0.0 || v[5] <= 0.0 {
                return Err(DatasetError::parse(path, i + 1, "focal lengths must be positive"));
            }
            let mut k = CameraIntrinsics::new(v[0], v[5], v[2], v[6]);
            k.skew = v[1];
            return Ok(k);
        }
    }
    Err(DatasetError::parse(path, 1, "no P0 projection line"))
}

pub fn write_observations(path: &Path, observations: &[Observation]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for o in observations {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            o.frame, o.point, o.pixel.u, o.pixel.v, o.info.yxx, o.info.yxy, o.info.yyy
        ));
    }
    fs::write(path, out).map_err(|e| DatasetError::io(path, e))
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let mut observations = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v = parse_fields(path, i + 1, line, 7)?;
        if v[0] < 0.0 || v[0].fract() != 0.0 || v[1] < 0.0 || v[1].fract() != 0.0 {
            return Err(DatasetError::parse(path, i + 1, "frame and point ids must be nonnegative integers"));
        }
        observations.push(Observation {
            frame: v[0] as usize,
            point: v[1] as usize,
            pixel: Pixel2::new(v[2], v[3]),
            info: InfoMatrix2::new(v[4], v[5], v[6]),
        });
    }
    Ok(observations)
}

/// Loads the documented layout. Images and observations are optional;
/// a missing calibration file is an explicit error.
pub fn load_sequence(root: &Path) -> Result<Sequence, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingFile(root.to_path_buf()));
    }
    let intrinsics = read_calibration(&root.join("calib.txt"))?;

    let poses_path = root.join("poses.txt");
    let poses = if poses_path.exists() {
        Some(read_trajectory(&poses_path)?)
    } else {
        None
    };

    let obs_path = root.join("observations.txt");
    let observations = if obs_path.exists() {
        Some(read_observations(&obs_path)?)
    } else {
        None
    };

    let image_dir = root.join("image_0");
    let mut image_paths = Vec::new();
    if image_dir.is_dir() {
        let entries = fs::read_dir(&image_dir).map_err(|e| DatasetError::io(&image_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| DatasetError::io(&image_dir, e))?;
            let path = entry.path();
            if path.extension().is_some_and(|ext| ext == "png") {
                image_paths.push(path);
            }
        }
        image_paths.sort();
    }

    Ok(Sequence { root: root.to_path_buf(), image_paths, intrinsics, poses, observations })
}

/// Writes a synthetic scene in the benchmark layout. When a render config
/// is given, each frame is also rendered to image_0/.
pub fn write_scene(
    dir: &Path,
    scene: &SyntheticScene,
    render: Option<&RenderConfig>,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    write_calibration(&dir.join("calib.txt"), &scene.intrinsics)?;
    write_trajectory(&dir.join("poses.txt"), &scene.trajectory)?;
    write_observations(&dir.join("observations.txt"), &scene.observations)?;

    if let Some(cfg) = render {
        let image_dir = dir.join("image_0");
        fs::create_dir_all(&image_dir).map_err(|e| DatasetError::io(&image_dir, e))?;
        let mut cfg = *cfg;
        cfg.width = scene.width;
        cfg.height = scene.height;
        cfg.ground_y = scene.ground_y;
        for (i, pose) in scene.trajectory.iter().enumerate() {
            let img = render_ground_view(pose, &scene.intrinsics, &cfg);
            let path = image_dir.join(format!("{i:06}.png"));
            let mut file = fs::File::create(&path).map_err(|e| DatasetError::io(&path, e))?;
            // Touch the handle so creation errors surface before encoding.
            file.flush().map_err(|e| DatasetError::io(&path, e))?;
            drop(file);
            img.save_png(&path).map_err(|e| {
                DatasetError::io(&path, std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
            })?;
        }
    }
    Ok(())
}
