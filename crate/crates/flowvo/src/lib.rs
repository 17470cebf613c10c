//! Uncertainty-aware dense optical flow and monocular visual odometry.

pub mod corners;
pub mod dataset;
pub mod epipolar;
pub mod flow;
pub mod geometry;
pub mod imageops;
pub mod loopclosure;
pub mod reconstruct;
pub mod stats;
pub mod uncertainty;

pub use geometry::{CameraIntrinsics, EpipolarLine, Pixel2, Point3, PoseSE3};
pub use uncertainty::InfoMatrix2;
