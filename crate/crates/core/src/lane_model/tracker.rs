//! Per-boundary Kalman filters over `[y0, theta0, c0, c1]`.

use nalgebra::{Matrix4, Vector4};

use super::base::BaseClothoid;
use super::grouping::LaneOffset;
use crate::clothoid::Clothoid;
use crate::config::LaneModelConfig;
use crate::geometry::Pose2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedLane {
    pub id: u64,
    /// `[y0, theta0, c0, c1]` in the current ego frame.
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    /// Frames since creation.
    pub age: u32,
    /// Features supporting the lane in the latest frame.
    pub support: usize,
    /// Consecutive frames without support.
    pub missed: u32,
}

impl TrackedLane {
    pub fn y0(&self) -> f64 {
        self.state[0]
    }

    pub fn clothoid(&self, horizon: f64) -> Clothoid {
        Clothoid {
            y0: self.state[0],
            theta0: self.state[1],
            c0: self.state[2],
            c1: self.state[3],
            x_min: 0.0,
            x_max: horizon,
        }
    }
}

fn diag_sq(s: &[f64; 4]) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(s[0] * s[0], s[1] * s[1], s[2] * s[2], s[3] * s[3]))
}

/// Moves each lane into the ego frame reached by `motion` and adds process noise.
pub fn predict_lanes(lanes: &mut [TrackedLane], motion: &Pose2, cfg: &LaneModelConfig) {
    let dx = motion.x;
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, dx,  dx * dx / 2.0, dx * dx * dx / 6.0,
        0.0, 1.0, dx,            dx * dx / 2.0,
        0.0, 0.0, 1.0,           dx,
        0.0, 0.0, 0.0,           1.0,
    );
    let q = diag_sq(&cfg.process_sigma);
    for l in lanes.iter_mut() {
        let mut x = f * l.state;
        x[0] -= motion.y;
        x[1] -= motion.theta;
        l.state = x;
        l.covariance = f * l.covariance * f.transpose() + q;
        l.covariance = (l.covariance + l.covariance.transpose()) * 0.5;
    }
}

/// Measurement update of matched lanes with the boundary parameters implied
/// by the offset and the base course, coasting and expiry of unmatched ones,
/// creation of new lanes, and merging of lanes closer than the configured
/// separation (the older one survives).
pub fn update_tracked_lanes(
    lanes: &mut Vec<TrackedLane>,
    base: &BaseClothoid,
    offsets: &[LaneOffset],
    next_id: &mut u64,
    cfg: &LaneModelConfig,
) {
    let floor = cfg.measurement_sigma_floor;
    let course_var = |k: usize| base.covariance[(k, k)].max(0.0);
    let mut r = Matrix4::zeros();
    r[(1, 1)] = course_var(0).max(floor[1] * floor[1]);
    r[(2, 2)] = course_var(1).max(floor[2] * floor[2]);
    r[(3, 3)] = course_var(2).max(floor[3] * floor[3]);
    for l in lanes.iter_mut() {
        l.support = 0;
    }
    for o in offsets {
        let z = base.lane_params(o.offset, cfg.parallel_offsets);
        let mut rk = r;
        rk[(0, 0)] = o.variance.max(floor[0] * floor[0]);
        let slot = o.track.and_then(|id| lanes.iter().position(|l| l.id == id));
        match slot {
            Some(k) => {
                let l = &mut lanes[k];
                let s = l.covariance + rk;
                if let Some(si) = s.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) {
                    let gain = l.covariance * si;
                    l.state += gain * (z - l.state);
                    let ikh = Matrix4::identity() - gain;
                    // Joseph form keeps the covariance symmetric positive definite
                    l.covariance = ikh * l.covariance * ikh.transpose() + gain * rk * gain.transpose();
                    l.covariance = (l.covariance + l.covariance.transpose()) * 0.5;
                }
                l.support = o.support;
                l.missed = 0;
            }
            None => {
                lanes.push(TrackedLane {
                    id: *next_id,
                    state: z,
                    covariance: diag_sq(&cfg.initial_sigma),
                    age: 0,
                    support: o.support,
                    missed: 0,
                });
                *next_id += 1;
            }
        }
    }
    for l in lanes.iter_mut() {
        if l.support == 0 {
            l.missed += 1;
        }
        l.age += 1;
    }
    lanes.retain(|l| l.missed < cfg.max_missed_frames);
    merge_close(lanes, cfg.min_lane_separation);
}

/// Frames without any base clothoid: every lane coasts.
pub fn coast_lanes(lanes: &mut Vec<TrackedLane>, cfg: &LaneModelConfig) {
    for l in lanes.iter_mut() {
        l.support = 0;
        l.missed += 1;
        l.age += 1;
    }
    lanes.retain(|l| l.missed < cfg.max_missed_frames);
}

fn merge_close(lanes: &mut Vec<TrackedLane>, min_sep: f64) {
    loop {
        lanes.sort_by(|a, b| b.y0().total_cmp(&a.y0()));
        let pair = lanes
            .windows(2)
            .position(|w| (w[0].y0() - w[1].y0()).abs() < min_sep);
        let Some(k) = pair else { break };
        let (a, b) = (&lanes[k], &lanes[k + 1]);
        // the older track survives; ties go to the lower id
        let drop = if (a.age, std::cmp::Reverse(a.id)) >= (b.age, std::cmp::Reverse(b.id)) {
            k + 1
        } else {
            k
        };
        lanes.remove(drop);
    }
}

/// Lane clothoids of the live tracks on `[0, horizon]`, sorted by `y0`
/// descending (leftmost first).
pub fn lanes_snapshot(lanes: &[TrackedLane], horizon: f64) -> Vec<Clothoid> {
    let mut out: Vec<Clothoid> = lanes.iter().map(|l| l.clothoid(horizon)).collect();
    out.sort_by(|a, b| b.y0.total_cmp(&a.y0));
    out
}
