//! Pose fusion and the parallax gate that routes each frame to the
//! eight-point pipeline or to PnP-only tracking.

use nalgebra::UnitQuaternion;

use crate::flow::FlowField;
use crate::geometry::PoseSE3;
use crate::stats;

use super::scale::ScaleEstimate;

/// Which estimator a frame pair should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    /// Enough parallax: run dense flow + weighted eight-point.
    FullPipeline,
    /// Too little image motion for the epipolar geometry to be conditioned.
    PnPOnly,
}

/// Routes a frame pair by image motion. The full pipeline runs only when the
/// median tracked-corner displacement reaches 2.5 px and the 75th percentile
/// of the valid flow magnitudes exceeds 5 px; failing either condition falls
/// back to PnP-only. Empty inputs count as no parallax.
pub fn parallax_gate(corner_displacements: &[f64], flow: &FlowField) -> GateDecision {
    let median = match stats::median(corner_displacements) {
        Some(m) => m,
        None => return GateDecision::PnPOnly,
    };
    let magnitudes = flow.valid_magnitudes();
    let q3 = match stats::percentile(&magnitudes, 0.75) {
        Some(q) => q,
        None => return GateDecision::PnPOnly,
    };
    if median >= 2.5 && q3 > 5.0 {
        GateDecision::FullPipeline
    } else {
        GateDecision::PnPOnly
    }
}

/// Averages the scaled eight-point pose with the PnP pose when they agree;
/// otherwise keeps the eight-point pose. Agreement requires the PnP
/// translation norm to lie within 30% of the reference scale and the
/// rotations within 0.5 rad; both gates accept their boundary exactly.
/// The average is the component-wise translation mean and the quaternion
/// midpoint (slerp at 0.5 on the same hemisphere).
pub fn fuse_poses(pose_8pt: &PoseSE3, pose_pnp: &PoseSE3, scale_ref: &ScaleEstimate) -> PoseSE3 {
    let s = scale_ref.s;
    let scale_gap = (pose_pnp.translation.norm() - s).abs() / s;
    let rotation_gap = pose_8pt.rotation_angle_to(pose_pnp);
    if scale_gap > 0.30 || rotation_gap > 0.5 {
        return *pose_8pt;
    }

    let t = (pose_8pt.translation + pose_pnp.translation) * 0.5;
    let qa = pose_8pt.quaternion();
    let mut qb = pose_pnp.quaternion();
    if qa.coords.dot(&qb.coords) < 0.0 {
        qb = UnitQuaternion::new_unchecked(-qb.into_inner());
    }
    let q = qa.slerp(&qb, 0.5);
    PoseSE3::new(q.to_rotation_matrix(), t)
}

#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, Vector3};

    use super::*;
    use crate::reconstruct::scale::ScaleSource;

    fn reference(s: f64) -> ScaleEstimate {
        ScaleEstimate { s, source: ScaleSource::GroundPlane, quality: 1.0 }
    }

    fn flow_with_uniform_magnitude(mag: f64) -> FlowField {
        FlowField::from_parts(4, 4, vec![[mag, 0.0]; 16])
    }

    fn rot_z(angle: f64) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), angle)
    }

    #[test]
    fn gate_passes_with_strong_parallax() {
        let corners = vec![3.0, 3.0, 3.0];
        let flow = flow_with_uniform_magnitude(6.0);
        assert_eq!(parallax_gate(&corners, &flow), GateDecision::FullPipeline);
    }

    #[test]
    fn gate_rejects_low_corner_displacement() {
        let corners = vec![2.0, 2.0, 2.0];
        let flow = flow_with_uniform_magnitude(6.0);
        assert_eq!(parallax_gate(&corners, &flow), GateDecision::PnPOnly);
    }

    #[test]
    fn gate_rejects_low_flow_quantile() {
        let corners = vec![3.0, 3.0, 3.0];
        let flow = flow_with_uniform_magnitude(4.0);
        assert_eq!(parallax_gate(&corners, &flow), GateDecision::PnPOnly);
    }

    #[test]
    fn gate_median_boundary_is_inclusive_and_quantile_is_strict() {
        let corners = vec![2.5, 2.5, 2.5];
        let flow = flow_with_uniform_magnitude(6.0);
        assert_eq!(parallax_gate(&corners, &flow), GateDecision::FullPipeline);

        let flow = flow_with_uniform_magnitude(5.0);
        assert_eq!(parallax_gate(&corners, &flow), GateDecision::PnPOnly);
    }

    #[test]
    fn gate_falls_back_on_empty_inputs() {
        let flow = flow_with_uniform_magnitude(6.0);
        assert_eq!(parallax_gate(&[], &flow), GateDecision::PnPOnly);

        let mut empty = flow_with_uniform_magnitude(6.0);
        for y in 0..4 {
            for x in 0..4 {
                empty.invalidate(x, y);
            }
        }
        assert_eq!(parallax_gate(&[3.0], &empty), GateDecision::PnPOnly);
    }

    #[test]
    fn identical_poses_fuse_to_themselves() {
        let pose = PoseSE3::new(rot_z(0.2), Vector3::new(0.6, -0.3, 0.5));
        let fused = fuse_poses(&pose, &pose, &reference(pose.translation.norm()));
        assert!((fused.translation - pose.translation).norm() < 1e-12);
        assert!(fused.rotation_angle_to(&pose) < 1e-7);
    }

    #[test]
    fn half_scale_disagreement_returns_eight_point_pose() {
        let pose_8pt = PoseSE3::new(rot_z(0.1), Vector3::new(1.0, 0.0, 0.0));
        let pose_pnp = PoseSE3::new(rot_z(0.1), Vector3::new(1.5, 0.0, 0.0));
        let fused = fuse_poses(&pose_8pt, &pose_pnp, &reference(1.0));
        assert_eq!(fused, pose_8pt);
    }

    #[test]
    fn large_rotation_disagreement_returns_eight_point_pose() {
        let pose_8pt = PoseSE3::new(rot_z(0.0), Vector3::new(1.0, 0.0, 0.0));
        let pose_pnp = PoseSE3::new(rot_z(0.6), Vector3::new(1.0, 0.0, 0.0));
        let fused = fuse_poses(&pose_8pt, &pose_pnp, &reference(1.0));
        assert_eq!(fused, pose_8pt);
    }

    #[test]
    fn agreeing_poses_average_to_the_midpoint() {
        let pose_8pt = PoseSE3::new(rot_z(0.2), Vector3::new(1.0, 0.0, 0.0));
        let pose_pnp = PoseSE3::new(rot_z(0.4), Vector3::new(0.0, 1.0, 0.0));
        let fused = fuse_poses(&pose_8pt, &pose_pnp, &reference(1.0));

        assert!((fused.translation - Vector3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        let expected = PoseSE3::new(rot_z(0.3), fused.translation);
        assert!(fused.rotation_angle_to(&expected) < 1e-7);
    }

    #[test]
    fn scale_boundary_is_accepted() {
        // 13 and 10 keep the 30% gap exactly representable: (13-10)/10
        // rounds to the same double as the 0.30 literal in the gate.
        let pose_8pt = PoseSE3::new(rot_z(0.0), Vector3::new(10.0, 0.0, 0.0));
        let pose_pnp = PoseSE3::new(rot_z(0.0), Vector3::new(13.0, 0.0, 0.0));
        let fused = fuse_poses(&pose_8pt, &pose_pnp, &reference(10.0));
        assert!((fused.translation - Vector3::new(11.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_boundary_is_accepted() {
        // Recovered angles carry ~1e-16 rounding, so probe one step inside
        // and one step outside rather than the unrepresentable exact edge.
        let pose_8pt = PoseSE3::new(rot_z(0.0), Vector3::new(1.0, 0.0, 0.0));
        let inside = PoseSE3::new(rot_z(0.5 - 1e-12), Vector3::new(1.0, 0.0, 0.0));
        let fused = fuse_poses(&pose_8pt, &inside, &reference(1.0));
        assert!(fused.rotation_angle_to(&pose_8pt) > 0.2, "inside the gate must fuse");

        let outside = PoseSE3::new(rot_z(0.5 + 1e-9), Vector3::new(1.0, 0.0, 0.0));
        let kept = fuse_poses(&pose_8pt, &outside, &reference(1.0));
        assert_eq!(kept, pose_8pt);
    }
}
