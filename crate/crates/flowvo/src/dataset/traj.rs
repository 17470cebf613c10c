//! Seeded trajectory and landmark generators for the three evaluation
//! profiles: planar ground drive, aerial flight with a hover segment and
//! height variation, and a closed loop that revisits its start exactly.

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{CameraIntrinsics, Pixel2, Point3, PoseSE3};
use crate::uncertainty::InfoMatrix2;

use super::synth::{sample_noise, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryProfile {
    /// Constant-height forward drive with gentle steering. The camera is
    /// pitched down so most of the frame sees the textured ground.
    Ground { frames: usize, height: f64, step: f64, turn_rate: f64, pitch: f64 },
    /// Varying altitude with a mid-sequence pure-yaw hover segment.
    Aerial {
        frames: usize,
        height: f64,
        step: f64,
        amplitude: f64,
        hover_start: usize,
        hover_frames: usize,
        hover_yaw_rate: f64,
        pitch: f64,
    },
    /// Planar circle whose final pose is the first pose, bitwise.
    Loop { frames: usize, height: f64, radius: f64, pitch: f64 },
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub profile: TrajectoryProfile,
    pub n_points: usize,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    pub noise: NoiseModel,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            profile: TrajectoryProfile::Ground {
                frames: 40,
                height: 1.7,
                step: 0.5,
                turn_rate: 0.008,
                pitch: 0.45,
            },
            n_points: 400,
            intrinsics: CameraIntrinsics::new(80.0, 80.0, 32.0, 24.0),
            width: 64,
            height: 48,
            noise: NoiseModel::Isotropic { sigma: 0.0 },
        }
    }
}

/// One projected landmark: planted pixel noise, exact inverse covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame: usize,
    pub point: usize,
    pub pixel: Pixel2,
    pub info: InfoMatrix2,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// Camera-to-world pose per frame; world frame = first camera frame.
    pub trajectory: Vec<PoseSE3>,
    pub points: Vec<Point3>,
    pub observations: Vec<Observation>,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    /// World-frame y of the ground plane (camera y points down).
    pub ground_y: f64,
}

fn yaw(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle)
}

fn pitch_down(angle: f64) -> Rotation3<f64> {
    // Positive angle tips the optical axis toward +y, where the ground is.
    Rotation3::from_axis_angle(&Vector3::x_axis(), -angle)
}

fn build_trajectory(profile: &TrajectoryProfile) -> (Vec<PoseSE3>, f64) {
    match *profile {
        TrajectoryProfile::Ground { frames, height, step, turn_rate, pitch } => {
            let tilt = pitch_down(pitch);
            let mut poses = Vec::with_capacity(frames);
            let mut position = Vector3::zeros();
            for k in 0..frames {
                let heading = yaw(turn_rate * k as f64);
                poses.push(PoseSE3::new(heading * tilt, position));
                // Heading column z has zero y-component, so height stays exact.
                position += heading * Vector3::new(0.0, 0.0, step);
            }
            (poses, height)
        }
        TrajectoryProfile::Aerial {
            frames,
            height,
            step,
            amplitude,
            hover_start,
            hover_frames,
            hover_yaw_rate,
            pitch,
        } => {
            let tilt = pitch_down(pitch);
            let mut poses = Vec::with_capacity(frames);
            let mut along = 0.0;
            let mut heading_angle = 0.0;
            for k in 0..frames {
                let hovering = k >= hover_start && k < hover_start + hover_frames;
                if k > 0 {
                    if hovering {
                        heading_angle += hover_yaw_rate;
                    } else {
                        along += step;
                    }
                }
                let wobble = amplitude * (2.0 * std::f64::consts::PI * k as f64
                    / frames.max(2) as f64)
                    .sin();
                let altitude = if hovering {
                    // Freeze the altitude too: a hover frame moves by rotation only.
                    poses.last().map_or(0.0, |p: &PoseSE3| p.translation.y)
                } else {
                    -wobble
                };
                let position = Vector3::new(0.0, altitude, along);
                poses.push(PoseSE3::new(yaw(heading_angle) * tilt, position));
            }
            (poses, height)
        }
        TrajectoryProfile::Loop { frames, height, radius, pitch } => {
            let tilt = pitch_down(pitch);
            let mut poses = Vec::with_capacity(frames);
            for k in 0..frames {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / (frames - 1) as f64;
                let position = Vector3::new(radius * (1.0 - theta.cos()), 0.0, radius * theta.sin());
                poses.push(PoseSE3::new(yaw(theta) * tilt, position));
            }
            poses[frames - 1] = poses[0];
            (poses, height)
        }
    }
}

/// Pure function of (config, seed): trajectory, landmarks (ground-plane
/// points plus raised structure so PnP never sees a coplanar set), and
/// noisy projected observations.
pub fn generate_trajectory(cfg: &TrajectoryConfig, seed: u64) -> SyntheticScene {
    let (trajectory, ground_y) = build_trajectory(&cfg.profile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut min = trajectory[0].translation;
    let mut max = trajectory[0].translation;
    for pose in &trajectory {
        min = min.inf(&pose.translation);
        max = max.sup(&pose.translation);
    }
    let margin = 4.0 + ground_y;
    let x_range = (min.x - margin, max.x + margin);
    let z_range = (min.z - margin, max.z + margin + 2.0 * ground_y);

    let mut points = Vec::with_capacity(cfg.n_points);
    for i in 0..cfg.n_points {
        let x = rng.gen_range(x_range.0..x_range.1);
        let z = rng.gen_range(z_range.0..z_range.1);
        // 70% flat ground, 30% raised structure (smaller y is higher).
        let y = if i % 10 < 7 {
            ground_y
        } else {
            ground_y - rng.gen_range(0.1..0.8) * ground_y
        };
        points.push(Point3::new(Vector3::new(x, y, z)));
    }

    let info = cfg.noise.information();
    let mut observations = Vec::new();
    for (frame, pose) in trajectory.iter().enumerate() {
        let world_to_cam = pose.inverse();
        for (id, point) in points.iter().enumerate() {
            let Some(pixel) = cfg.intrinsics.project(&world_to_cam.transform(&point.position))
            else {
                continue;
            };
            if pixel.u < 0.0
                || pixel.v < 0.0
                || pixel.u > (cfg.width - 1) as f64
                || pixel.v > (cfg.height - 1) as f64
            {
                continue;
            }
            let noise = sample_noise(&cfg.noise, &mut rng);
            observations.push(Observation {
                frame,
                point: id,
                pixel: Pixel2::new(pixel.u + noise[0], pixel.v + noise[1]),
                info,
            });
        }
    }

    SyntheticScene {
        trajectory,
        points,
        observations,
        intrinsics: cfg.intrinsics,
        width: cfg.width,
        height: cfg.height,
        ground_y,
    }
}
