//! Pose graph over camera-to-world vertices.
//!
//! Edges store the measured relative pose X_from^-1 X_to with a 6x6
//! information matrix ordered [translation, rotation]. The text format is
//! the VERTEX_SE3:QUAT / EDGE_SE3:QUAT convention with the 21 upper-
//! triangular information entries; edge kind is recovered from the index
//! gap, consecutive meaning odometry.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::geometry::PoseSE3;

use super::LoopError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Debug, Clone)]
pub struct PoseGraphEdge {
    pub from: usize,
    pub to: usize,
    /// Measured X_from^-1 X_to.
    pub relative: PoseSE3,
    /// Information over [t_x, t_y, t_z, r_x, r_y, r_z].
    pub information: Matrix6<f64>,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    pub vertices: Vec<PoseSE3>,
    pub edges: Vec<PoseGraphEdge>,
}

/// Rotation vector of R, safe at and near the identity.
pub(crate) fn rotation_log(r: &Rotation3<f64>) -> Vector3<f64> {
    UnitQuaternion::from_rotation_matrix(r).scaled_axis()
}

/// Decoupled exponential: rotation from the axis-angle part, translation
/// taken verbatim. Inverse of the residual convention below.
pub(crate) fn se3_exp(delta: &Vector6<f64>) -> PoseSE3 {
    let v = Vector3::new(delta[0], delta[1], delta[2]);
    let w = Vector3::new(delta[3], delta[4], delta[5]);
    PoseSE3::new(Rotation3::new(w), v)
}

/// Edge residual [t, log R] of measurement^-1 (X_from^-1 X_to); zero when
/// the vertices agree with the measurement.
pub(crate) fn edge_residual(edge: &PoseGraphEdge, vertices: &[PoseSE3]) -> Vector6<f64> {
    let rel = vertices[edge.from].inverse().compose(&vertices[edge.to]);
    let err = edge.relative.inverse().compose(&rel);
    let w = rotation_log(&err.rotation);
    Vector6::new(
        err.translation.x,
        err.translation.y,
        err.translation.z,
        w.x,
        w.y,
        w.z,
    )
}

impl PoseGraph {
    /// Chains odometry edges along a trajectory, one per consecutive pair,
    /// all sharing the given information matrix.
    pub fn from_odometry(trajectory: &[PoseSE3], information: Matrix6<f64>) -> Self {
        let edges = trajectory
            .windows(2)
            .enumerate()
            .map(|(k, w)| PoseGraphEdge {
                from: k,
                to: k + 1,
                relative: w[0].inverse().compose(&w[1]),
                information,
                kind: EdgeKind::Odometry,
            })
            .collect();
        Self { vertices: trajectory.to_vec(), edges }
    }

    pub fn add_loop(
        &mut self,
        from: usize,
        to: usize,
        relative: PoseSE3,
        information: Matrix6<f64>,
    ) {
        self.edges.push(PoseGraphEdge { from, to, relative, information, kind: EdgeKind::Loop });
    }

    /// Unweighted robust-free cost, for reporting.
    pub fn chi2(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let r = edge_residual(e, &self.vertices);
                (r.transpose() * e.information * r)[0]
            })
            .sum()
    }

    /// Index validity, information symmetry and positive semidefiniteness,
    /// and odometry connectivity from vertex 0.
    pub fn validate(&self) -> Result<(), LoopError> {
        let len = self.vertices.len();
        for (k, e) in self.edges.iter().enumerate() {
            for index in [e.from, e.to] {
                if index >= len {
                    return Err(LoopError::InvalidIndex { index, len });
                }
            }
            if e.from == e.to {
                return Err(LoopError::InvalidIndex { index: e.to, len });
            }
            let info = &e.information;
            let scale = info.amax().max(1.0);
            if (info - info.transpose()).amax() > 1e-9 * scale {
                return Err(LoopError::BadInformation { edge: k });
            }
            let min_eig = info.symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-9 * scale {
                return Err(LoopError::BadInformation { edge: k });
            }
        }

        if len == 0 {
            return Ok(());
        }
        let mut seen = vec![false; len];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for e in &self.edges {
                if e.kind != EdgeKind::Odometry {
                    continue;
                }
                for next in [(e.from, e.to), (e.to, e.from)] {
                    if next.0 == v && !seen[next.1] {
                        seen[next.1] = true;
                        queue.push_back(next.1);
                    }
                }
            }
        }
        if let Some(vertex) = seen.iter().position(|&s| !s) {
            return Err(LoopError::Disconnected { vertex });
        }
        Ok(())
    }
}

fn quat_fields(pose: &PoseSE3) -> (Vector3<f64>, Quaternion<f64>) {
    (pose.translation, *pose.quaternion().quaternion())
}

pub fn write_g2o(path: &Path, graph: &PoseGraph) -> Result<(), LoopError> {
    let mut out = String::new();
    for (id, v) in graph.vertices.iter().enumerate() {
        let (t, q) = quat_fields(v);
        out.push_str(&format!(
            "VERTEX_SE3:QUAT {id} {} {} {} {} {} {} {}\n",
            t.x, t.y, t.z, q.i, q.j, q.k, q.w
        ));
    }
    for e in &graph.edges {
        let (t, q) = quat_fields(&e.relative);
        out.push_str(&format!(
            "EDGE_SE3:QUAT {} {} {} {} {} {} {} {} {}",
            e.from, e.to, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        ));
        for row in 0..6 {
            for col in row..6 {
                out.push_str(&format!(" {}", e.information[(row, col)]));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LoopError::io(path, e))
}

pub fn read_g2o(path: &Path) -> Result<PoseGraph, LoopError> {
    let text = fs::read_to_string(path).map_err(|e| LoopError::io(path, e))?;
    let mut vertices: Vec<Option<PoseSE3>> = Vec::new();
    let mut edges = Vec::new();

    for (no, line) in text.lines().enumerate() {
        let no = no + 1;
        let mut fields = line.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        let nums = |want: usize| -> Result<Vec<f64>, LoopError> {
            if rest.len() != want {
                return Err(LoopError::parse(
                    path,
                    no,
                    format!("expected {want} fields after {tag}, got {}", rest.len()),
                ));
            }
            rest.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| LoopError::parse(path, no, format!("not a number: {f}")))
                })
                .collect()
        };

        match tag {
            "VERTEX_SE3:QUAT" => {
                let v = nums(8)?;
                let id = v[0] as usize;
                if vertices.len() <= id {
                    vertices.resize(id + 1, None);
                }
                vertices[id] = Some(pose_from_tq(&v[1..8]));
            }
            "EDGE_SE3:QUAT" => {
                let v = nums(30)?;
                let (from, to) = (v[0] as usize, v[1] as usize);
                let relative = pose_from_tq(&v[2..9]);
                let mut information = Matrix6::zeros();
                let mut k = 9;
                for row in 0..6 {
                    for col in row..6 {
                        information[(row, col)] = v[k];
                        information[(col, row)] = v[k];
                        k += 1;
                    }
                }
                let kind = if from.abs_diff(to) == 1 {
                    EdgeKind::Odometry
                } else {
                    EdgeKind::Loop
                };
                edges.push(PoseGraphEdge { from, to, relative, information, kind });
            }
            other => {
                return Err(LoopError::parse(path, no, format!("unknown record: {other}")));
            }
        }
    }

    let mut out = Vec::with_capacity(vertices.len());
    for (id, v) in vertices.into_iter().enumerate() {
        let Some(v) = v else {
            return Err(LoopError::parse(path, 1, format!("vertex {id} never defined")));
        };
        out.push(v);
    }
    Ok(PoseGraph { vertices: out, edges })
}

fn pose_from_tq(v: &[f64]) -> PoseSE3 {
    let t = Vector3::new(v[0], v[1], v[2]);
    let q = UnitQuaternion::new_normalize(Quaternion::new(v[6], v[3], v[4], v[5]));
    PoseSE3::new(q.to_rotation_matrix(), t)
}
