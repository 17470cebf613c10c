//! Pose-graph relaxation.
//!
//! Levenberg-Marquardt over all vertices but the anchored first one, with
//! numeric edge Jacobians and an IRLS Huber weight on loop edges so a bad
//! closure cannot drag the whole trajectory. Only strictly improving steps
//! are accepted, so the reported cost never increases; three rejected
//! steps in a row abort with the last accepted state.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::geometry::PoseSE3;

use super::graph::{edge_residual, se3_exp, EdgeKind, PoseGraph};
use super::LoopError;

#[derive(Debug, Clone, Copy)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Relative cost-decrease threshold that counts as converged.
    pub tol: f64,
    /// Huber threshold on the whitened loop-edge residual norm.
    pub huber_delta: f64,
    pub initial_lambda: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-9, huber_delta: 1.0, initial_lambda: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeStatus {
    Converged,
    MaxIterations,
    /// Three consecutive non-improving steps; vertices hold the last
    /// accepted state.
    Aborted,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeReport {
    pub status: OptimizeStatus,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Linear systems solved, accepted or not.
    pub iterations: usize,
}

const JACOBIAN_EPS: f64 = 1e-6;
const MAX_REJECTS: usize = 3;

fn robust_cost(graph: &PoseGraph, vertices: &[PoseSE3], delta: f64) -> f64 {
    graph
        .edges
        .iter()
        .map(|e| {
            let r = edge_residual(e, vertices);
            let sq = (r.transpose() * e.information * r)[0];
            match e.kind {
                EdgeKind::Odometry => sq,
                EdgeKind::Loop => {
                    let s = sq.max(0.0).sqrt();
                    if s <= delta {
                        sq
                    } else {
                        2.0 * delta * s - delta * delta
                    }
                }
            }
        })
        .sum()
}

/// IRLS scaling of an edge's information for the current residual.
fn huber_weight(kind: EdgeKind, sq: f64, delta: f64) -> f64 {
    if kind == EdgeKind::Odometry {
        return 1.0;
    }
    let s = sq.max(0.0).sqrt();
    if s <= delta {
        1.0
    } else {
        delta / s
    }
}

fn perturbed(pose: &PoseSE3, axis: usize, eps: f64) -> PoseSE3 {
    let mut d = Vector6::zeros();
    d[axis] = eps;
    pose.compose(&se3_exp(&d))
}

/// 6x12 numeric Jacobian of the edge residual in [from, to] tangent order.
fn edge_jacobian(
    edge: &super::graph::PoseGraphEdge,
    vertices: &mut [PoseSE3],
) -> nalgebra::SMatrix<f64, 6, 12> {
    let mut jac = nalgebra::SMatrix::<f64, 6, 12>::zeros();
    for (slot, vid) in [(0, edge.from), (1, edge.to)] {
        let saved = vertices[vid];
        for axis in 0..6 {
            vertices[vid] = perturbed(&saved, axis, JACOBIAN_EPS);
            let plus = edge_residual(edge, vertices);
            vertices[vid] = perturbed(&saved, axis, -JACOBIAN_EPS);
            let minus = edge_residual(edge, vertices);
            vertices[vid] = saved;
            let col = (plus - minus) / (2.0 * JACOBIAN_EPS);
            jac.fixed_view_mut::<6, 1>(0, slot * 6 + axis).copy_from(&col);
        }
    }
    jac
}

/// Relaxes the graph in place. Vertex 0 stays fixed, pinning the gauge.
pub fn optimize_pose_graph(
    graph: &mut PoseGraph,
    cfg: &OptimizeConfig,
) -> Result<OptimizeReport, LoopError> {
    graph.validate()?;
    let n = graph.vertices.len();
    let initial_cost = robust_cost(graph, &graph.vertices, cfg.huber_delta);
    let mut report = OptimizeReport {
        status: OptimizeStatus::Converged,
        initial_cost,
        final_cost: initial_cost,
        iterations: 0,
    };
    if n <= 1 || graph.edges.is_empty() || initial_cost <= 1e-18 {
        return Ok(report);
    }

    let dim = 6 * (n - 1);
    let mut vertices = graph.vertices.clone();
    let mut cost = initial_cost;
    let mut lambda = cfg.initial_lambda;
    let mut rejects = 0usize;

    for _ in 0..cfg.max_iters {
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);
        for e in &graph.edges {
            let r = edge_residual(e, &vertices);
            let sq = (r.transpose() * e.information * r)[0];
            let omega: Matrix6<f64> =
                e.information * huber_weight(e.kind, sq, cfg.huber_delta);
            let jac = edge_jacobian(e, &mut vertices);
            let jt_omega = jac.transpose() * omega;
            let block_h = jt_omega * jac;
            let block_g = jt_omega * r;
            for (si, vi) in [(0usize, e.from), (1, e.to)] {
                if vi == 0 {
                    continue;
                }
                let oi = 6 * (vi - 1);
                g.rows_mut(oi, 6).add_assign(&block_g.rows(si * 6, 6));
                for (sj, vj) in [(0usize, e.from), (1, e.to)] {
                    if vj == 0 {
                        continue;
                    }
                    let oj = 6 * (vj - 1);
                    h.view_mut((oi, oj), (6, 6))
                        .add_assign(&block_h.view((si * 6, sj * 6), (6, 6)));
                }
            }
        }

        let mut damped = h.clone();
        for k in 0..dim {
            damped[(k, k)] += lambda * h[(k, k)] + 1e-12;
        }
        report.iterations += 1;
        let step = damped.lu().solve(&(-&g));
        let accepted = step.and_then(|delta| {
            let mut trial = vertices.clone();
            for v in 1..n {
                let d = Vector6::from_iterator(delta.rows(6 * (v - 1), 6).iter().cloned());
                trial[v] = trial[v].compose(&se3_exp(&d));
            }
            let trial_cost = robust_cost(graph, &trial, cfg.huber_delta);
            (trial_cost < cost).then_some((trial, trial_cost))
        });

        match accepted {
            Some((trial, trial_cost)) => {
                let drop = cost - trial_cost;
                vertices = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                rejects = 0;
                if drop <= cfg.tol * cost.max(1.0) {
                    report.status = OptimizeStatus::Converged;
                    break;
                }
                report.status = OptimizeStatus::MaxIterations;
            }
            None => {
                lambda *= 5.0;
                rejects += 1;
                if rejects >= MAX_REJECTS {
                    report.status = OptimizeStatus::Aborted;
                    break;
                }
                report.status = OptimizeStatus::MaxIterations;
            }
        }
    }

    graph.vertices = vertices;
    report.final_cost = cost;
    Ok(report)
}
