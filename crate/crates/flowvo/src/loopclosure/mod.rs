//! Loop closure: distance-based candidate recall, appearance gating,
//! dense-flow geometric verification, and pose-graph optimization.

pub mod candidates;
pub mod graph;
pub mod optimize;
pub mod ssim;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub use candidates::{find_candidates, gate_by_ssim, CandidateConfig, CandidateStatus, LoopCandidate};
pub use graph::{read_g2o, write_g2o, EdgeKind, PoseGraph, PoseGraphEdge};
pub use optimize::{optimize_pose_graph, OptimizeConfig, OptimizeReport, OptimizeStatus};
pub use ssim::mean_ssim;
pub use verify::{verify_by_flow, LoopClosure, RejectReason, VerifyConfig};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("index {index} out of range for {len} frames")]
    InvalidIndex { index: usize, len: usize },
    #[error("vertex {vertex} is not reachable through odometry edges")]
    Disconnected { vertex: usize },
    #[error("edge {edge} information matrix is not symmetric positive semidefinite")]
    BadInformation { edge: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

impl LoopError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Self::Parse { path: path.into(), line, msg: msg.into() }
    }
}
