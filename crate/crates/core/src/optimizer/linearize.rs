//! First-order expansion of the graph objective around the current estimate.

use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::sparse::{scalar_offsets, BlockMatrix, SymbolicFactor};
use crate::geometry::{wrap, Pose2};
use crate::graph::{pose_residual, FusionGraph, SwitchId, VertexId, VertexKind};

/// One optimisation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Vertex(VertexId),
    Switch(SwitchId),
}

impl Variable {
    pub fn dim(self) -> usize {
        match self {
            Variable::Vertex(_) => 3,
            Variable::Switch(_) => 1,
        }
    }
}

/// Residual `e = z - between(a, b)` and its Jacobians with respect to `a` and `b`.
pub fn edge_jacobians(z: &Pose2, a: &Pose2, b: &Pose2) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let e = pose_residual(z, a, b);
    let (s, c) = a.theta.sin_cos();
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let tx = c * dx + s * dy;
    let ty = -s * dx + c * dy;
    #[rustfmt::skip]
    let ja = Matrix3::new(
        c,   s,   -ty,
        -s,  c,    tx,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let jb = Matrix3::new(
        -c,  -s,  0.0,
        s,   -c,  0.0,
        0.0, 0.0, -1.0,
    );
    (e, ja, jb)
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Slot {
    Free(usize),
    Fixed(Pose2),
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub from: Slot,
    pub to: Slot,
    pub z: Pose2,
    pub info: Matrix3<f64>,
    pub switch: Option<usize>,
}

/// The graph flattened into index form, with variables ordered switches
/// first, then feature vertices, then free ego poses. This keeps the fill of
/// the factor confined to the (small) pose block.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub vars: Vec<Variable>,
    pub poses: Vec<Pose2>,
    pub switch_values: Vec<f64>,
    pub switch_prior: Vec<f64>,
    pub factors: Vec<Factor>,
    pub symbolic: Rc<SymbolicFactor>,
}

impl Problem {
    pub fn from_graph(g: &FusionGraph) -> Self {
        let fixed = g.current_pose();
        let mut vars = Vec::new();
        let mut switch_prior = Vec::new();
        let mut switch_values = Vec::new();
        let mut poses = Vec::new();
        let mut sidx = std::collections::HashMap::new();
        let mut vidx = std::collections::HashMap::new();
        for s in g.switches() {
            sidx.insert(s.id, vars.len());
            vars.push(Variable::Switch(s.id));
            switch_values.push(s.value);
            switch_prior.push(s.prior_information);
            poses.push(Pose2::IDENTITY);
        }
        for v in g.feature_vertices() {
            vidx.insert(v.id, vars.len());
            vars.push(Variable::Vertex(v.id));
            switch_values.push(0.0);
            switch_prior.push(0.0);
            poses.push(v.pose);
        }
        for id in g.pose_ids().filter(|&p| p != fixed) {
            let v = g.vertex(id).expect("pose vertex");
            debug_assert_eq!(v.kind, VertexKind::EgoPose);
            vidx.insert(id, vars.len());
            vars.push(Variable::Vertex(id));
            switch_values.push(0.0);
            switch_prior.push(0.0);
            poses.push(v.pose);
        }
        let slot = |id: VertexId| match vidx.get(&id) {
            Some(&i) => Slot::Free(i),
            None => Slot::Fixed(g.vertex(id).expect("edge endpoint").pose),
        };
        let factors: Vec<Factor> = g
            .edges()
            .map(|e| Factor {
                from: slot(e.from),
                to: slot(e.to),
                z: e.measurement,
                info: e.information,
                switch: e.switch.map(|s| sidx[&s]),
            })
            .collect();
        let dims = vars.iter().map(|v| v.dim()).collect();
        let mut couplings = Vec::new();
        for f in &factors {
            let mut idx = Vec::with_capacity(3);
            for s in [f.from, f.to] {
                if let Slot::Free(i) = s {
                    idx.push(i);
                }
            }
            idx.extend(f.switch);
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    couplings.push((idx[a], idx[b]));
                }
            }
        }
        let symbolic = Rc::new(SymbolicFactor::analyze(dims, couplings));
        Self {
            vars,
            poses,
            switch_values,
            switch_prior,
            factors,
            symbolic,
        }
    }

    pub fn has_switches(&self) -> bool {
        self.vars.iter().any(|v| matches!(v, Variable::Switch(_)))
    }

    fn pose(&self, s: Slot) -> Pose2 {
        slot_pose(&self.poses, s)
    }

    pub fn objective(&self) -> f64 {
        self.objective_at(&self.poses, &self.switch_values)
    }

    /// Objective of the same graph at another state.
    pub fn objective_at(&self, poses: &[Pose2], sv: &[f64]) -> f64 {
        let mut j = 0.0;
        for f in &self.factors {
            let mut e = pose_residual(&f.z, &slot_pose(poses, f.from), &slot_pose(poses, f.to));
            if let Some(s) = f.switch {
                e *= sv[s];
            }
            j += e.dot(&(f.info * e));
        }
        for (i, v) in self.vars.iter().enumerate() {
            if let Variable::Switch(_) = v {
                let r = 1.0 - sv[i];
                j += self.switch_prior[i] * r * r;
            }
        }
        j
    }

    /// Gauss-Newton normal matrix `H = J^T Omega J` and gradient `J^T Omega e`.
    ///
    /// With `exact_switch` the switch/pose blocks also get the second-order
    /// term of the bilinear residual `s e(x)`, which doubles them. This turns
    /// the switch coupling into a Newton step and restores fast convergence
    /// on graphs with non-zero residual, but `H` may then be indefinite.
    pub fn linearize(&self, exact_switch: bool) -> (BlockMatrix, Vec<Vector3<f64>>) {
        let mut h = BlockMatrix::zeros(Rc::clone(&self.symbolic));
        let mut grad = vec![Vector3::zeros(); self.vars.len()];
        let mut blocks: Vec<(usize, Matrix3<f64>)> = Vec::with_capacity(3);
        for f in &self.factors {
            let (mut e, mut ja, mut jb) =
                edge_jacobians(&f.z, &self.pose(f.from), &self.pose(f.to));
            blocks.clear();
            if let Some(si) = f.switch {
                let s = self.switch_values[si];
                let mut js = Matrix3::zeros();
                js.set_column(0, &e);
                blocks.push((si, js));
                e *= s;
                ja *= s;
                jb *= s;
            }
            if let Slot::Free(i) = f.from {
                blocks.push((i, ja));
            }
            if let Slot::Free(i) = f.to {
                blocks.push((i, jb));
            }
            let oe = f.info * e;
            for (k, (a, jk)) in blocks.iter().enumerate() {
                let jto = jk.transpose() * f.info;
                grad[*a] += jk.transpose() * oe;
                h.add(*a, *a, &(jto * jk));
                for (b, jl) in blocks.iter().skip(k + 1) {
                    // (b, a) block is J_b^T Omega J_a
                    let mut blk = jl.transpose() * f.info * jk;
                    if exact_switch && k == 0 && f.switch.is_some() {
                        blk *= 2.0;
                    }
                    h.add(*b, *a, &blk);
                }
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            if let Variable::Switch(_) = v {
                let w = self.switch_prior[i];
                let r = 1.0 - self.switch_values[i];
                let mut m = Matrix3::zeros();
                m[(0, 0)] = w;
                h.add(i, i, &m);
                grad[i][0] -= w * r;
            }
        }
        (h, grad)
    }

    /// State advanced by `step` (per-variable block vectors); switches clamped.
    pub fn stepped(&self, step: &[Vector3<f64>], scale: f64) -> (Vec<Pose2>, Vec<f64>) {
        let mut poses = self.poses.clone();
        let mut sv = self.switch_values.clone();
        for (i, v) in self.vars.iter().enumerate() {
            let d = step[i] * scale;
            match v {
                Variable::Vertex(_) => {
                    let p = poses[i];
                    poses[i] = Pose2 {
                        x: p.x + d[0],
                        y: p.y + d[1],
                        theta: wrap(p.theta + d[2]),
                    };
                }
                Variable::Switch(_) => sv[i] = (sv[i] + d[0]).clamp(0.0, 1.0),
            }
        }
        (poses, sv)
    }

    /// Largest absolute state change between the current state and `(poses, sv)`.
    pub fn max_change(&self, poses: &[Pose2], sv: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for (i, v) in self.vars.iter().enumerate() {
            match v {
                Variable::Vertex(_) => {
                    let a = self.poses[i];
                    let b = poses[i];
                    m = m
                        .max((a.x - b.x).abs())
                        .max((a.y - b.y).abs())
                        .max(wrap(a.theta - b.theta).abs());
                }
                Variable::Switch(_) => m = m.max((self.switch_values[i] - sv[i]).abs()),
            }
        }
        m
    }
}

fn slot_pose(poses: &[Pose2], s: Slot) -> Pose2 {
    match s {
        Slot::Free(i) => poses[i],
        Slot::Fixed(p) => p,
    }
}

/// Normal equations of the graph at its current estimate, with the current
/// ego pose held fixed.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub variables: Vec<Variable>,
    pub hessian: BlockMatrix,
    /// `J^T Omega e`, one padded block per variable.
    pub gradient: Vec<Vector3<f64>>,
}

impl LinearizedSystem {
    pub fn dim(&self) -> usize {
        self.variables.iter().map(|v| v.dim()).sum()
    }

    pub fn dense_hessian(&self) -> DMatrix<f64> {
        self.hessian.to_dense()
    }

    pub fn dense_gradient(&self) -> DVector<f64> {
        let dims: Vec<usize> = self.variables.iter().map(|v| v.dim()).collect();
        let offs = scalar_offsets(&dims);
        let mut g = DVector::zeros(self.dim());
        for (j, &d) in dims.iter().enumerate() {
            for k in 0..d {
                g[offs[j] + k] = self.gradient[j][k];
            }
        }
        g
    }
}

pub fn linearize(g: &FusionGraph) -> LinearizedSystem {
    let p = Problem::from_graph(g);
    let (hessian, gradient) = p.linearize(false);
    LinearizedSystem {
        variables: p.vars,
        hessian,
        gradient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn numeric_jacobians(z: &Pose2, a: &Pose2, b: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
        let h = 1e-6;
        let mut ja = Matrix3::zeros();
        let mut jb = Matrix3::zeros();
        for k in 0..3 {
            let bump = |p: &Pose2, sgn: f64| {
                let mut v = p.as_array();
                v[k] += sgn * h;
                Pose2 { x: v[0], y: v[1], theta: v[2] }
            };
            let d = (pose_residual(z, &bump(a, 1.0), b) - pose_residual(z, &bump(a, -1.0), b))
                / (2.0 * h);
            ja.set_column(k, &d);
            let d = (pose_residual(z, a, &bump(b, 1.0)) - pose_residual(z, a, &bump(b, -1.0)))
                / (2.0 * h);
            jb.set_column(k, &d);
        }
        (ja, jb)
    }

    #[test]
    fn analytic_jacobians_match_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut p = || {
                Pose2::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-3.0..3.0),
                )
            };
            let (z, a, b) = (p(), p(), p());
            if pose_residual(&z, &a, &b)[2].abs() > 3.0 {
                continue;
            }
            let (_, ja, jb) = edge_jacobians(&z, &a, &b);
            let (na, nb) = numeric_jacobians(&z, &a, &b);
            assert!((ja - na).abs().max() < 1e-5, "{ja} vs {na}");
            assert!((jb - nb).abs().max() < 1e-5, "{jb} vs {nb}");
        }
    }
}
