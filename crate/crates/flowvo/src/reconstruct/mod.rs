//! Metric structure from calibrated two-view geometry: triangulation
//! with propagated uncertainty, ground-plane and depth-ratio scale
//! recovery, PnP, pose fusion gates, and depth-map bookkeeping.

pub mod depth;
pub mod fuse;
pub mod plane;
pub mod pnp;
pub mod scale;
pub mod triangulate;

use thiserror::Error;

pub use depth::{fuse_depth_maps, propagate_depth, DepthMap, DEPTH_STD_INFLATION};
pub use fuse::{fuse_poses, parallax_gate, GateDecision};
pub use plane::{fit_ground_plane, Plane, PlaneFitConfig};
pub use pnp::{pnp_pose, PnpConfig};
pub use scale::{apply_scale, fuse_scales, scale_from_depth_ratio, scale_from_height, ScaleEstimate, ScaleSource, VehicleMode};
pub use triangulate::{triangulate, Triangulated};

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructError {
    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("no plane satisfies the ground prior")]
    NoPlane,
    #[error("scale is undefined or not positive")]
    InvalidScale,
    #[error("depth maps share no valid pixels")]
    EmptyOverlap,
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("no consensus set found")]
    NoConsensus,
    #[error("mismatched dimensions")]
    MismatchedSizes,
    #[error("no valid scale input")]
    NoValidInput,
}
