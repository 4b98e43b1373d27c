//! Gauss-Newton optimisation of the fusion graph.
//!
//! The current ego pose is held fixed to remove the gauge freedom. Each
//! iteration solves `H delta = -J^T Omega e` with a block-sparse Cholesky
//! factorisation and halves the step while the objective increases.

mod linearize;
pub mod sparse;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub use linearize::{edge_jacobians, linearize, LinearizedSystem, Variable};
use linearize::Problem;

use crate::config::{CovarianceMode, SolverConfig};
use crate::feature::{check_psd, LaneFeature};
use crate::graph::{FusionGraph, SwitchId, VertexId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    /// The normal matrix is singular; the listed variables are not pinned
    /// down by any constraint combination.
    #[error("under-constrained graph: vertices {vertices:?}, switches {switches:?}")]
    Singular {
        vertices: Vec<VertexId>,
        switches: Vec<SwitchId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub converged: bool,
    /// Step halvings over all iterations.
    pub halvings: usize,
    /// Objective after each accepted iteration.
    pub history: Vec<f64>,
}

/// Optimises all vertex poses and switch values in place. With
/// [`CovarianceMode::Marginal`] the vertex covariances are refreshed from the
/// inverse normal matrix at the solution.
pub fn solve(g: &mut FusionGraph, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    let mut p = Problem::from_graph(g);
    let initial = p.objective();
    let mut report = SolveReport {
        iterations: 0,
        initial_objective: initial,
        final_objective: initial,
        converged: p.vars.is_empty(),
        halvings: 0,
        history: Vec::new(),
    };
    if p.vars.is_empty() {
        return Ok(report);
    }
    let mut j_old = initial;
    for it in 1..=cfg.max_iterations {
        report.iterations = it;
        let step = match newton_step(&p, true) {
            Some(s) => s,
            None => gauss_newton_step(&p)?,
        };
        let mut scale = 1.0;
        let (mut poses, mut sv) = p.stepped(&step, scale);
        let mut j_new = p.objective_at(&poses, &sv);
        let mut halvings = 0;
        while !(j_new <= j_old) && halvings < cfg.max_halvings {
            scale *= 0.5;
            halvings += 1;
            (poses, sv) = p.stepped(&step, scale);
            j_new = p.objective_at(&poses, &sv);
        }
        report.halvings += halvings;
        if !(j_new <= j_old) {
            // no descent along the Gauss-Newton direction: already at the
            // minimum up to round-off
            report.converged = p.max_change(&poses, &sv) < cfg.tolerance
                || (j_new - j_old) <= 1e-9 * (1.0 + j_old);
            break;
        }
        let change = p.max_change(&poses, &sv);
        p.poses = poses;
        p.switch_values = sv;
        j_old = j_new;
        report.history.push(j_new);
        if change < cfg.tolerance {
            report.converged = true;
            break;
        }
    }
    report.final_objective = j_old;
    write_back(g, &p);
    if cfg.covariance == CovarianceMode::Marginal {
        let (mut h, _) = p.linearize(false);
        if let Err(k) = h.factorize() {
            return Err(singular_error(&p, k));
        }
        let z = h.inverse_diagonal();
        for (i, v) in p.vars.iter().enumerate() {
            if let Variable::Vertex(id) = v {
                g.set_vertex_covariance(*id, z[i]);
            }
        }
    }
    Ok(report)
}

/// Step with the exact switch coupling; `None` when that matrix is not
/// positive definite or the step is not a descent direction.
fn newton_step(p: &Problem, exact_switch: bool) -> Option<Vec<Vector3<f64>>> {
    if !p.has_switches() {
        return None;
    }
    let (mut h, grad) = p.linearize(exact_switch);
    h.factorize().ok()?;
    let mut step: Vec<Vector3<f64>> = grad.iter().map(|v| -v).collect();
    h.solve_in_place(&mut step);
    let slope: f64 = step.iter().zip(&grad).map(|(d, g)| d.dot(g)).sum();
    (slope < 0.0 && step.iter().all(|d| d.iter().all(|x| x.is_finite()))).then_some(step)
}

fn gauss_newton_step(p: &Problem) -> Result<Vec<Vector3<f64>>, SolveError> {
    let (mut h, grad) = p.linearize(false);
    if let Err(k) = h.factorize() {
        return Err(singular_error(p, k));
    }
    let mut step: Vec<Vector3<f64>> = grad.iter().map(|v| -v).collect();
    h.solve_in_place(&mut step);
    Ok(step)
}

fn write_back(g: &mut FusionGraph, p: &Problem) {
    for (i, v) in p.vars.iter().enumerate() {
        match v {
            Variable::Vertex(id) => g.set_vertex_pose(*id, p.poses[i]),
            Variable::Switch(id) => g.set_switch_value(*id, p.switch_values[i]),
        }
    }
}

fn singular_error(p: &Problem, failed: usize) -> SolveError {
    // every variable whose own information block is rank deficient, plus the
    // pivot where the factorisation broke down
    let (h, _) = p.linearize(false);
    let mut vertices = Vec::new();
    let mut switches = Vec::new();
    for (i, v) in p.vars.iter().enumerate() {
        let d = v.dim();
        let blk = h.diag[i].view((0, 0), (d, d)).into_owned();
        let eig = blk.symmetric_eigen();
        let max = eig.eigenvalues.amax();
        let deficient = eig.eigenvalues.min() <= 1e-12 * max.max(1e-300);
        if deficient || i == failed {
            match v {
                Variable::Vertex(id) => vertices.push(*id),
                Variable::Switch(id) => switches.push(*id),
            }
        }
    }
    SolveError::Singular { vertices, switches }
}

/// Feature vertices with the covariance the lane model should use: the
/// solver marginal, or a confidence-scaled diagonal when marginals are
/// disabled or unusable.
pub fn extract_fused_features(g: &FusionGraph, cfg: &SolverConfig) -> Vec<(VertexId, LaneFeature)> {
    g.feature_vertices()
        .map(|v| {
            let marginal_ok = cfg.covariance == CovarianceMode::Marginal
                && v.covariance.iter().all(|x| x.is_finite())
                && v.covariance.diagonal().min() > 0.0
                && check_psd(&v.covariance).is_ok();
            let cov = if marginal_ok {
                v.covariance
            } else {
                fallback_covariance(v.confidence, &cfg.fallback_sigma)
            };
            (v.id, LaneFeature::new(v.pose, v.confidence, cov))
        })
        .collect()
}

fn fallback_covariance(confidence: f64, sigma: &[f64; 3]) -> Matrix3<f64> {
    let c = confidence.clamp(1e-3, 1.0);
    Matrix3::from_diagonal(&Vector3::new(sigma[0].powi(2), sigma[1].powi(2), sigma[2].powi(2)))
        / c
}

#[cfg(test)]
mod tests;
