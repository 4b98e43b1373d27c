use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::config::GraphConfig;
use crate::geometry::Pose2;
use crate::graph::{EdgeKind, FusionGraph};

fn info(sx: f64, sy: f64, st: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&nalgebra::Vector3::new(sx.powi(-2), sy.powi(-2), st.powi(-2)))
}

/// Random connected graph: a chain of poses, features seen from several poses,
/// and smoothing edges between feature pairs.
fn random_graph(seed: u64) -> FusionGraph {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut g = FusionGraph::new(GraphConfig::default());
    let cur = g.current_pose();
    let mut poses = Vec::new();
    for k in 1..=3 {
        poses.push(g.add_raw_pose(Pose2::new(-2.0 * k as f64, 0.0, 0.0)));
    }
    let mut prev = cur;
    for &p in &poses {
        let z = Pose2::new(-2.0 + rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.01);
        g.add_raw_edge(EdgeKind::Odometry, prev, p, z, info(0.05, 0.05, 0.01)).unwrap();
        prev = p;
    }
    let mut feats = Vec::new();
    for i in 0..5 {
        let truth = Pose2::new(5.0 * i as f64, 1.75, 0.0);
        let f = g.add_raw_feature(
            Pose2::new(truth.x + rng.random_range(-0.3..0.3), truth.y + rng.random_range(-0.3..0.3), 0.02),
            0.9,
        );
        for &p in [cur].iter().chain(poses.iter()).take(1 + i % 3) {
            let pp = g.vertex(p).unwrap().pose;
            let mut z = pp.between(&truth);
            z.y += rng.random_range(-0.1..0.1);
            g.add_raw_edge(EdgeKind::HrcMeas, p, f, z, info(0.2, 0.1, 0.02)).unwrap();
        }
        feats.push(f);
    }
    for w in feats.windows(2) {
        let z = Pose2::new(5.0, rng.random_range(-0.2..0.2), 0.0);
        g.add_raw_edge(EdgeKind::Smoothing, w[0], w[1], z, info(0.5, 0.1, 0.02)).unwrap();
    }
    let ids: Vec<_> = g.switches().map(|s| s.id).collect();
    for id in ids {
        g.set_switch_value(id, rng.random_range(0.3..0.9));
    }
    g
}

/// Stacked whitened residuals of the graph at a flat state vector laid out
/// like the solver's variables.
fn whitened_residuals(g: &FusionGraph, vars: &[Variable], x: &DVector<f64>) -> DVector<f64> {
    let mut pose: HashMap<_, Pose2> = g.vertices().map(|v| (v.id, v.pose)).collect();
    let mut sw: HashMap<_, f64> = g.switches().map(|s| (s.id, s.value)).collect();
    let mut k = 0;
    for v in vars {
        match v {
            Variable::Vertex(id) => {
                pose.insert(*id, Pose2 { x: x[k], y: x[k + 1], theta: x[k + 2] });
                k += 3;
            }
            Variable::Switch(id) => {
                sw.insert(*id, x[k]);
                k += 1;
            }
        }
    }
    let mut out = Vec::new();
    for e in g.edges() {
        let s = e.switch.map(|s| sw[&s]);
        let r = e.residual(&pose[&e.from], &pose[&e.to], s);
        let l = e.information.cholesky().unwrap().l();
        out.extend((l.transpose() * r).iter().copied());
    }
    for s in g.switches() {
        out.push(s.prior_information.sqrt() * (1.0 - sw[&s.id]));
    }
    DVector::from_vec(out)
}

fn state_vector(g: &FusionGraph, vars: &[Variable]) -> DVector<f64> {
    let mut x = Vec::new();
    for v in vars {
        match v {
            Variable::Vertex(id) => x.extend(g.vertex(*id).unwrap().pose.as_array()),
            Variable::Switch(id) => x.push(g.switch(*id).unwrap().value),
        }
    }
    DVector::from_vec(x)
}

#[test]
fn normal_equations_match_numeric_jacobian() {
    for seed in 0..10 {
        let g = random_graph(seed);
        let sys = linearize(&g);
        let x = state_vector(&g, &sys.variables);
        let r0 = whitened_residuals(&g, &sys.variables, &x);
        let h = 1e-6;
        let mut j = DMatrix::zeros(r0.len(), x.len());
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let d = (whitened_residuals(&g, &sys.variables, &xp)
                - whitened_residuals(&g, &sys.variables, &xm))
                / (2.0 * h);
            j.set_column(c, &d);
        }
        let h_num = j.transpose() * &j;
        let g_num = j.transpose() * &r0;
        let h_an = sys.dense_hessian();
        let g_an = sys.dense_gradient();
        let scale = h_num.amax();
        assert!((&h_an - &h_num).amax() < 1e-5 * scale, "seed {seed}");
        assert!((&g_an - &g_num).amax() < 1e-5 * g_num.amax().max(1.0), "seed {seed}");
        assert_eq!(sys.dim(), x.len());
        // the objective is the squared norm of the whitened residuals
        assert!((r0.norm_squared() - g.objective()).abs() < 1e-9 * g.objective().max(1.0));
    }
}

#[test]
fn first_step_matches_dense_gauss_newton() {
    let g0 = random_graph(42);
    let sys = linearize(&g0);
    let x = state_vector(&g0, &sys.variables);
    let delta = sys
        .dense_hessian()
        .lu()
        .solve(&(-sys.dense_gradient()))
        .unwrap();
    let cfg = SolverConfig {
        max_iterations: 1,
        covariance: CovarianceMode::ConfidenceDiagonal,
        ..SolverConfig::default()
    };
    let mut g = g0.clone();
    let rep = solve(&mut g, &cfg).unwrap();
    assert_eq!(rep.iterations, 1);
    if rep.halvings == 0 {
        let x1 = state_vector(&g, &sys.variables);
        let mut k = 0;
        for v in &sys.variables {
            let d = v.dim();
            for c in 0..d {
                let expect = x[k + c] + delta[k + c];
                let expect = if d == 1 { expect.clamp(0.0, 1.0) } else { expect };
                assert!((x1[k + c] - expect).abs() < 1e-8);
            }
            k += d;
        }
    }
    assert!(rep.final_objective <= rep.initial_objective);
}

#[test]
fn solver_converges_and_never_increases_objective() {
    for seed in 0..20 {
        let mut g = random_graph(seed);
        let j0 = g.objective();
        let rep = solve(&mut g, &SolverConfig::default()).unwrap();
        assert!(rep.converged, "seed {seed}: {rep:?}");
        assert!(rep.final_objective <= j0 + 1e-12);
        let mut last = j0;
        for &j in &rep.history {
            assert!(j <= last + 1e-12);
            last = j;
        }
        assert!((g.objective() - rep.final_objective).abs() < 1e-9 * (1.0 + j0));
        for s in g.switches() {
            assert!((0.0..=1.0).contains(&s.value));
        }
    }
}

#[test]
fn consistent_graph_converges_in_one_iteration() {
    let mut g = FusionGraph::new(GraphConfig::default());
    let cur = g.current_pose();
    let truth = Pose2::new(10.0, 1.75, 0.01);
    let f = g.add_raw_feature(truth, 1.0);
    g.add_raw_edge(EdgeKind::HrcMeas, cur, f, truth, info(0.1, 0.1, 0.01)).unwrap();
    let rep = solve(&mut g, &SolverConfig::default()).unwrap();
    assert_eq!(rep.iterations, 1);
    assert!(rep.converged);
    assert!(rep.final_objective < 1e-20);
}

#[test]
fn two_measurements_give_information_weighted_mean() {
    let mut g = FusionGraph::new(GraphConfig::default());
    let cur = g.current_pose();
    let f = g.add_raw_feature(Pose2::new(20.0, 1.0, 0.0), 1.0);
    let o1 = info(0.2, 0.1, 0.01);
    let o2 = info(0.2, 0.3, 0.01);
    g.add_raw_edge(EdgeKind::HrcMeas, cur, f, Pose2::new(20.0, 1.6, 0.0), o1).unwrap();
    g.add_raw_edge(EdgeKind::SmcMeas, cur, f, Pose2::new(20.0, 2.0, 0.0), o2).unwrap();
    solve(&mut g, &SolverConfig::default()).unwrap();
    let v = g.vertex(f).unwrap();
    let w1 = 1.0 / 0.01;
    let w2 = 1.0 / 0.09;
    let expect = (w1 * 1.6 + w2 * 2.0) / (w1 + w2);
    assert!((v.pose.y - expect).abs() < 1e-9);
    assert!((v.pose.x - 20.0).abs() < 1e-9);
    let cov = (o1 + o2).try_inverse().unwrap();
    assert!((v.covariance - cov).abs().max() < 1e-12);
}

#[test]
fn lane_change_disables_crossing_smoothing_edge() {
    // an object drifting one lane width to the left between two steps: its
    // right-hand feature chain jumps by 3.5 m, contradicting the marking
    // measurements, and the smoothing edge spanning the jump is switched off
    let mut g = FusionGraph::new(GraphConfig::default());
    let cur = g.current_pose();
    let meas = info(0.2, 0.05, 0.01);
    let mut chain = Vec::new();
    for i in 0..6 {
        let x = 10.0 * i as f64;
        let y = if i < 3 { -1.75 } else { 1.75 };
        let f = g.add_raw_feature(Pose2::new(x, y, 0.0), 1.0);
        g.add_raw_edge(EdgeKind::HrcMeas, cur, f, Pose2::new(x, y, 0.0), meas).unwrap();
        chain.push(f);
    }
    let smo = info(0.5, 0.1, 0.02);
    for w in chain.windows(2) {
        g.add_raw_edge(EdgeKind::Smoothing, w[0], w[1], Pose2::new(10.0, 0.0, 0.0), smo).unwrap();
    }
    solve(&mut g, &SolverConfig::default()).unwrap();
    for s in g.switches() {
        let e = g.edge(s.edge).unwrap();
        let ya = g.vertex(e.from).unwrap().pose.y;
        let yb = g.vertex(e.to).unwrap().pose.y;
        if (ya - yb).abs() > 1.0 {
            assert!(s.value < 0.1, "crossing switch {}", s.value);
        } else {
            assert!(s.value > 0.9, "kept switch {}", s.value);
        }
    }
    for &f in &chain {
        let v = g.vertex(f).unwrap();
        assert!(v.pose.y.abs() > 1.5);
    }
}

#[test]
fn unconstrained_vertex_is_named() {
    let mut g = FusionGraph::new(GraphConfig::default());
    let cur = g.current_pose();
    let f = g.add_raw_feature(Pose2::new(10.0, 0.0, 0.0), 1.0);
    let mut o = info(0.1, 0.1, 0.1);
    o[(2, 2)] = 0.0;
    g.add_raw_edge(EdgeKind::HrcMeas, cur, f, Pose2::new(10.0, 0.0, 0.0), o).unwrap();
    let ok = g.add_raw_feature(Pose2::new(5.0, 0.0, 0.0), 1.0);
    g.add_raw_edge(EdgeKind::HrcMeas, cur, ok, Pose2::new(5.0, 0.0, 0.0), info(0.1, 0.1, 0.1)).unwrap();
    match solve(&mut g, &SolverConfig::default()) {
        Err(SolveError::Singular { vertices, switches }) => {
            assert_eq!(vertices, vec![f]);
            assert!(switches.is_empty());
        }
        other => panic!("expected singular error, got {other:?}"),
    }
}

#[test]
fn empty_graph_is_trivially_solved() {
    let mut g = FusionGraph::new(GraphConfig::default());
    let rep = solve(&mut g, &SolverConfig::default()).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterations, 0);
}

#[test]
fn fused_feature_covariances() {
    let mut g = random_graph(7);
    solve(&mut g, &SolverConfig::default()).unwrap();
    let fused = extract_fused_features(&g, &SolverConfig::default());
    assert_eq!(fused.len(), g.feature_vertices().count());
    for (id, f) in &fused {
        assert_eq!(f.covariance, g.vertex(*id).unwrap().covariance);
        assert!(f.validate().is_ok());
    }
    let cfg = SolverConfig {
        covariance: CovarianceMode::ConfidenceDiagonal,
        ..SolverConfig::default()
    };
    for (id, f) in extract_fused_features(&g, &cfg) {
        let c = g.vertex(id).unwrap().confidence;
        assert!((f.covariance[(1, 1)] - 0.2f64.powi(2) / c).abs() < 1e-12);
        assert_eq!(f.covariance[(0, 1)], 0.0);
    }
}

#[test]
fn marginals_match_dense_inverse() {
    let mut g = random_graph(3);
    solve(&mut g, &SolverConfig::default()).unwrap();
    let sys = linearize(&g);
    let inv = sys.dense_hessian().try_inverse().unwrap();
    let mut k = 0;
    for v in &sys.variables {
        if let Variable::Vertex(id) = v {
            let c = g.vertex(*id).unwrap().covariance;
            let d = inv.view((k, k), (3, 3));
            assert!((c - d).abs().max() < 1e-9 * d.amax().max(1e-6));
        }
        k += v.dim();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_is_monotone(seed in 0u64..10_000) {
        let mut g = random_graph(seed);
        let j0 = g.objective();
        let rep = solve(&mut g, &SolverConfig::default()).unwrap();
        prop_assert!(rep.final_objective <= j0 + 1e-12);
        let mut last = j0;
        for &j in &rep.history {
            prop_assert!(j <= last + 1e-12);
            last = j;
        }
    }
}
