//! Exact lane geometry and ego trajectory, and their view from the vehicle.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::road::{RoadCourse, RoadSegment};
use crate::geometry::Pose2;

/// Arc-time window of one lane change of one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeRecord {
    pub object_id: u64,
    pub start: f64,
    pub end: f64,
    pub from_lane: usize,
    pub to_lane: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthMap {
    pub road: Vec<RoadSegment>,
    pub lane_count: usize,
    pub lane_width: f64,
    /// Lane driven by the ego vehicle, 0 = rightmost.
    pub ego_lane: usize,
    pub timestamps: Vec<f64>,
    /// Global ego pose per frame.
    pub ego_poses: Vec<Pose2>,
    /// Arc position of the ego vehicle per frame.
    pub ego_arc: Vec<f64>,
    #[serde(default)]
    pub lane_changes: Vec<LaneChangeRecord>,
    #[serde(skip)]
    course: OnceLock<RoadCourse>,
}

impl PartialEq for GroundTruthMap {
    fn eq(&self, o: &Self) -> bool {
        self.road == o.road
            && self.lane_count == o.lane_count
            && self.lane_width == o.lane_width
            && self.ego_lane == o.ego_lane
            && self.timestamps == o.timestamps
            && self.ego_poses == o.ego_poses
            && self.ego_arc == o.ego_arc
            && self.lane_changes == o.lane_changes
    }
}

impl GroundTruthMap {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        road: Vec<RoadSegment>,
        lane_count: usize,
        lane_width: f64,
        ego_lane: usize,
        course: RoadCourse,
    ) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(course);
        Self {
            road,
            lane_count,
            lane_width,
            ego_lane,
            timestamps: Vec::new(),
            ego_poses: Vec::new(),
            ego_arc: Vec::new(),
            lane_changes: Vec::new(),
            course: cell,
        }
    }

    pub fn course(&self) -> &RoadCourse {
        self.course.get_or_init(|| {
            let end = self.ego_arc.iter().copied().fold(0.0, f64::max) + 400.0;
            RoadCourse::new(&self.road, end)
        })
    }

    /// Lateral offset of boundary `k` (0 = rightmost) from the centre line.
    pub fn boundary_offset(&self, k: usize) -> f64 {
        (k as f64 - self.lane_count as f64 / 2.0) * self.lane_width
    }

    /// Offset of the centre of lane `i`.
    pub fn lane_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - self.lane_count as f64 / 2.0) * self.lane_width
    }

    pub fn boundary_count(&self) -> usize {
        self.lane_count + 1
    }

    /// Arc position of the centre-line point closest to `(x, y)`, searched
    /// near `hint`.
    pub fn project(&self, x: f64, y: f64, hint: f64) -> f64 {
        let c = self.course();
        let mut s = hint;
        for _ in 0..30 {
            let (px, py) = c.point(s);
            let (sn, cs) = c.heading(s).sin_cos();
            let step = (x - px) * cs + (y - py) * sn;
            s += step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        s
    }
}

/// One true boundary as seen from the vehicle, densely sampled with slopes
/// for Hermite interpolation in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBoundary {
    pub index: usize,
    pub offset: f64,
    pub points: Vec<(f64, f64, f64)>,
}

impl LocalBoundary {
    /// Lateral position at longitudinal distance `x`, `None` outside the samples.
    pub fn y_at(&self, x: f64) -> Option<f64> {
        let p = &self.points;
        let k = p.partition_point(|q| q.0 <= x);
        if k == 0 || k == p.len() {
            return (p.last().is_some_and(|q| q.0 == x)).then(|| p[p.len() - 1].1);
        }
        let (x0, y0, m0) = p[k - 1];
        let (x1, y1, m1) = p[k];
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * h * m0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * h * m1,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTruth {
    pub ego: Pose2,
    /// Boundaries ordered from right (index 0) to left.
    pub boundaries: Vec<LocalBoundary>,
}

const LOCAL_BEHIND: f64 = 30.0;
const LOCAL_AHEAD: f64 = 170.0;
const LOCAL_STEP: f64 = 0.5;

/// The true boundaries in the frame of `ego` (a global pose).
pub fn ground_truth_local(map: &GroundTruthMap, ego: &Pose2) -> LocalTruth {
    let hint = nearest_arc(map, ego);
    let s_e = map.project(ego.x, ego.y, hint);
    let c = map.course();
    let n = ((LOCAL_BEHIND + LOCAL_AHEAD) / LOCAL_STEP) as usize;
    let boundaries = (0..map.boundary_count())
        .map(|k| {
            let d = map.boundary_offset(k);
            let mut points = Vec::with_capacity(n + 1);
            for j in 0..=n {
                let s = s_e - LOCAL_BEHIND + j as f64 * LOCAL_STEP;
                if s < 0.0 {
                    continue;
                }
                let (gx, gy) = c.offset_point(s, d);
                let (lx, ly) = ego.inverse_transform_point(gx, gy);
                let slope = (c.heading(s) - ego.theta).tan();
                points.push((lx, ly, slope));
            }
            LocalBoundary {
                index: k,
                offset: d,
                points,
            }
        })
        .collect();
    LocalTruth { ego: *ego, boundaries }
}

fn nearest_arc(map: &GroundTruthMap, ego: &Pose2) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (p, &s) in map.ego_poses.iter().zip(&map.ego_arc) {
        let d = (p.x - ego.x).hypot(p.y - ego.y);
        if d < best.0 {
            best = (d, s);
        }
    }
    if best.0.is_finite() {
        return best.1;
    }
    // no trajectory recorded: coarse scan of the course
    let c = map.course();
    let mut s = 0.0;
    let mut best = (f64::INFINITY, 0.0);
    while s <= c.max_arc() {
        let (x, y) = c.point(s);
        let d = (x - ego.x).hypot(y - ego.y);
        if d < best.0 {
            best = (d, s);
        }
        s += 10.0;
    }
    best.1
}
