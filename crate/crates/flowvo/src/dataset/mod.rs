//! Synthetic ground-truth generators, odometry-benchmark dataset I/O,
//! and trajectory-error metrics.

pub mod io;
pub mod metrics;
pub mod render;
pub mod synth;
pub mod traj;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{load_sequence, read_trajectory, write_trajectory, Sequence};
pub use metrics::{
    evaluate_trajectory, mirror_sequence, scale_drift_report, ScaleDriftReport, SegmentError,
    TrajectoryMetrics, DEFAULT_SEGMENT_LENGTHS,
};
pub use render::{render_ground_view, render_with_depth, RenderConfig};
pub use synth::{generate_two_view, sample_noise, NoiseModel, TwoViewConfig, TwoViewSample};
pub use traj::{generate_trajectory, Observation, SyntheticScene, TrajectoryConfig, TrajectoryProfile};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    LengthMismatch(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Self::Parse { path: path.into(), line, msg: msg.into() }
    }
}
