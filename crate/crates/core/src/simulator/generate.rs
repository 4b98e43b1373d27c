use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::road::RoadCourse;
use super::truth::{GroundTruthMap, LaneChangeRecord};
use super::ScenarioConfig;
use crate::clothoid::Clothoid;
use crate::error::Result;
use crate::feature::LaneFeature;
use crate::geometry::{ControlVector, Pose2};
use crate::ingest::{ClothoidSigma, HrcFeatureReport, SmcLaneReport, TrackedObject};

/// Everything the vehicle reports at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp: f64,
    /// Motion since the previous frame.
    pub control: ControlVector,
    pub smc: Option<SmcLaneReport>,
    pub hrc: Option<HrcFeatureReport>,
    pub objects: Vec<TrackedObject>,
}

// independent random streams, so that switching one source off leaves the
// realisations of the others untouched
const STREAM_ODO: u64 = 1;
const STREAM_SMC: u64 = 2;
const STREAM_HRC: u64 = 3;
const STREAM_TRAFFIC: u64 = 4;
const STREAM_TRACKER: u64 = 5;
const STREAM_EGO: u64 = 6;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Smooth zero-mean lateral process along arc length: a sum of three
/// sinusoids with random wavelengths and phases, standard deviation `sigma`.
#[derive(Debug, Clone)]
struct Smooth {
    comps: [(f64, f64, f64); 3],
}

impl Smooth {
    fn new(rng: &mut ChaCha8Rng, sigma: f64, lambda: (f64, f64)) -> Self {
        let amp = sigma * (2.0f64 / 3.0).sqrt();
        let mut comps = [(0.0, 0.0, 0.0); 3];
        for c in &mut comps {
            let l = rng.random_range(lambda.0..lambda.1);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            *c = (amp, std::f64::consts::TAU / l, ph);
        }
        Self { comps }
    }

    fn value(&self, u: f64) -> f64 {
        self.comps.iter().map(|(a, k, p)| a * (k * u + p).sin()).sum()
    }

    fn slope(&self, u: f64) -> f64 {
        self.comps.iter().map(|(a, k, p)| a * k * (k * u + p).cos()).sum()
    }
}

/// Pose on the course at arc `s` and lateral offset `d`, with `dd` the
/// derivative of the offset along the arc.
fn offset_pose(c: &RoadCourse, s: f64, d: f64, dd: f64) -> Pose2 {
    let (x, y) = c.offset_point(s, d);
    let heading = c.heading(s) + dd.atan2(1.0 - c.curvature(s) * d);
    Pose2::new(x, y, heading)
}

struct ObjectSlot {
    id: u64,
    lane: usize,
    s: f64,
    speed: f64,
    /// (start time, from offset, to offset)
    change: Option<(f64, f64, f64)>,
    driver: Smooth,
    tracker: [f64; 3],
    visible: u32,
}

impl ObjectSlot {
    /// Lateral offset of the object centre and its time derivative.
    fn lane_offset(&self, t: f64, center: f64, duration: f64) -> (f64, f64) {
        match self.change {
            Some((t0, a, b)) if t < t0 + duration => {
                let tau = ((t - t0) / duration).clamp(0.0, 1.0);
                let pi = std::f64::consts::PI;
                let w = (1.0 - (pi * tau).cos()) / 2.0;
                let dw = if t >= t0 { pi * (pi * tau).sin() / (2.0 * duration) } else { 0.0 };
                (a + (b - a) * w, (b - a) * dw)
            }
            _ => (center, 0.0),
        }
    }
}

/// Least-squares cubic `y(x)` through local points, as clothoid parameters.
fn fit_cubic(pts: &[(f64, f64)], range: f64) -> Option<[f64; 4]> {
    if pts.len() < 8 {
        return None;
    }
    let a = DMatrix::from_fn(pts.len(), 4, |i, k| (pts[i].0 / range).powi(k as i32));
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let coef = a.svd(true, true).solve(&b, 1e-14).ok()?;
    let c = |k: usize| coef[k] / range.powi(k as i32);
    Some([c(0), c(1), 2.0 * c(2), 6.0 * c(3)])
}

/// Generates the ground truth and the sensor frames of a scenario.
pub fn generate(cfg: &ScenarioConfig) -> Result<(GroundTruthMap, Vec<SensorFrame>)> {
    cfg.validate()?;
    let n_frames = cfg.frame_count();
    let dt = 1.0 / cfg.frame_rate;
    let fastest = cfg
        .traffic
        .objects
        .iter()
        .map(|o| o.speed)
        .fold(cfg.ego_speed, f64::max);
    let horizon = cfg.start_arc + fastest * cfg.duration + 600.0;
    let course = RoadCourse::new(&cfg.road, horizon);
    let mut truth = GroundTruthMap::new(
        cfg.road.clone(),
        cfg.lane_count,
        cfg.lane_width,
        cfg.ego_lane,
        course.clone(),
    );
    let n = &cfg.noise;

    let mut rng_odo = stream(cfg.seed, STREAM_ODO);
    let mut rng_smc = stream(cfg.seed, STREAM_SMC);
    let mut rng_hrc = stream(cfg.seed, STREAM_HRC);
    let mut rng_traffic = stream(cfg.seed, STREAM_TRAFFIC);
    let mut rng_tracker = stream(cfg.seed, STREAM_TRACKER);
    let mut rng_ego = stream(cfg.seed, STREAM_EGO);

    let wander = Smooth::new(&mut rng_ego, n.ego_wander_sigma, (400.0, 1200.0));
    let ego_d = truth.lane_center(cfg.ego_lane);
    let ego_pose_at = |s: f64| offset_pose(&course, s, ego_d + wander.value(s), wander.slope(s));

    let tracker_a = (-dt / n.object_noise_time).exp();
    let tracker_sig = [n.object_sigma, n.object_sigma, n.object_heading_sigma];
    let mut next_id = 1u64;
    let mut slots: Vec<ObjectSlot> = cfg
        .traffic
        .objects
        .iter()
        .map(|o| {
            let driver = Smooth::new(&mut rng_traffic, n.driver_lateral_sigma, (300.0, 800.0));
            let tracker = [
                gauss(&mut rng_tracker, tracker_sig[0]),
                gauss(&mut rng_tracker, tracker_sig[1]),
                gauss(&mut rng_tracker, tracker_sig[2]),
            ];
            let slot = ObjectSlot {
                id: next_id,
                lane: o.lane,
                s: cfg.start_arc + o.distance,
                speed: o.speed,
                change: None,
                driver,
                tracker,
                visible: 0,
            };
            next_id += 1;
            slot
        })
        .collect();
    let mut events = cfg.traffic.lane_changes.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_event = 0;

    let fov = n.hrc_fov_deg.to_radians();
    let smc_floor = [0.02, 1e-3, 1e-5, 1e-7];
    let dropped = |boundary: usize, from: f64, to: f64| {
        n.dropouts
            .iter()
            .any(|d| d.boundary == boundary && d.from <= to && from <= d.to)
    };

    let mut frames = Vec::with_capacity(n_frames);
    let mut prev_pose = ego_pose_at((cfg.start_arc - cfg.ego_speed * dt).max(0.0));
    for k in 0..n_frames {
        let t = k as f64 * dt;
        let s_e = cfg.start_arc + cfg.ego_speed * t;
        let ego = ego_pose_at(s_e);
        truth.timestamps.push(t);
        truth.ego_poses.push(ego);
        truth.ego_arc.push(s_e);

        let mut control = ControlVector::from_motion_delta(&prev_pose.between(&ego), dt);
        control.speed = (control.speed + gauss(&mut rng_odo, n.odo_speed_sigma)).max(0.0);
        control.yaw_rate += gauss(&mut rng_odo, n.odo_yaw_rate_sigma);
        prev_pose = ego;

        // serial camera: cubic fit of the two ego-lane boundaries
        let smc_noise = [
            gauss(&mut rng_smc, n.smc_offset_sigma),
            gauss(&mut rng_smc, n.smc_heading_sigma),
            gauss(&mut rng_smc, n.smc_c0_sigma),
            gauss(&mut rng_smc, n.smc_c1_sigma),
            gauss(&mut rng_smc, n.smc_offset_sigma),
            gauss(&mut rng_smc, n.smc_heading_sigma),
            gauss(&mut rng_smc, n.smc_c0_sigma),
            gauss(&mut rng_smc, n.smc_c1_sigma),
        ];
        let mut sides = [None, None];
        for (side, boundary) in [cfg.ego_lane, cfg.ego_lane + 1].into_iter().enumerate() {
            if dropped(boundary, s_e, s_e + n.smc_range) {
                continue;
            }
            let d = truth.boundary_offset(boundary);
            let mut pts = Vec::new();
            let mut s = s_e - 10.0;
            while s <= s_e + n.smc_range + 10.0 {
                let (gx, gy) = course.offset_point(s, d);
                let (x, y) = ego.inverse_transform_point(gx, gy);
                if (0.0..=n.smc_range).contains(&x) {
                    pts.push((x, y));
                }
                s += 1.0;
            }
            if let Some(p) = fit_cubic(&pts, n.smc_range) {
                let o = &smc_noise[side * 4..side * 4 + 4];
                sides[side] =
                    Clothoid::new(p[0] + o[0], p[1] + o[1], p[2] + o[2], p[3] + o[3], 0.0, n.smc_range).ok();
            }
        }
        let [right, left] = sides;
        let smc = (left.is_some() || right.is_some()).then(|| SmcLaneReport {
            left,
            right,
            detection_range: n.smc_range,
            sigma: ClothoidSigma {
                y0: n.smc_offset_sigma.max(smc_floor[0]),
                theta0: n.smc_heading_sigma.max(smc_floor[1]),
                c0: n.smc_c0_sigma.max(smc_floor[2]),
                c1: n.smc_c1_sigma.max(smc_floor[3]),
            },
            confidence: n.smc_confidence,
        });

        // high-resolution camera: marking points at fixed arc positions
        let mut hrc = Vec::new();
        for b in 0..truth.boundary_count() {
            let d = truth.boundary_offset(b);
            let j0 = ((s_e - 10.0) / n.hrc_spacing).ceil().max(0.0) as i64;
            let j1 = ((s_e + n.hrc_range + 10.0) / n.hrc_spacing).floor() as i64;
            for j in j0..=j1 {
                let s = j as f64 * n.hrc_spacing;
                let (gx, gy) = course.offset_point(s, d);
                let (x, y) = ego.inverse_transform_point(gx, gy);
                if !(x > 0.0 && x <= n.hrc_range && y.atan2(x).abs() <= fov) {
                    continue;
                }
                let sigma = n.hrc_sigma + n.hrc_sigma_slope * x;
                let nx = gauss(&mut rng_hrc, sigma);
                let ny = gauss(&mut rng_hrc, sigma);
                let nh = gauss(&mut rng_hrc, n.hrc_heading_sigma);
                let u: f64 = rng_hrc.random();
                let mag: f64 = rng_hrc.random_range(0.5..2.0);
                let sign = if rng_hrc.random::<bool>() { 1.0 } else { -1.0 };
                if dropped(b, s, s) {
                    continue;
                }
                let outlier = if u < n.hrc_outlier_rate { sign * mag } else { 0.0 };
                let heading = course.heading(s) - ego.theta;
                let rep = sigma.max(0.02);
                let hrep = n.hrc_heading_sigma.max(0.002);
                hrc.push(LaneFeature::new(
                    Pose2::new(x + nx, y + ny + outlier, heading + nh),
                    n.hrc_confidence,
                    Matrix3::from_diagonal(&Vector3::new(rep * rep, rep * rep, hrep * hrep)),
                ));
            }
        }
        let hrc = Some(HrcFeatureReport {
            features: hrc,
            max_range: n.hrc_range,
        });

        // traffic
        while next_event < events.len() && events[next_event].time <= t {
            let e = events[next_event];
            let slot = &mut slots[e.object];
            let from = truth.lane_center(e.from);
            let to = truth.lane_center(e.to);
            slot.change = Some((e.time, from, to));
            slot.lane = e.to;
            truth.lane_changes.push(LaneChangeRecord {
                object_id: slot.id,
                start: e.time,
                end: e.time + cfg.traffic.lane_change_duration,
                from_lane: e.from,
                to_lane: e.to,
            });
            next_event += 1;
        }
        let mut objects = Vec::new();
        for slot in &mut slots {
            if k > 0 {
                slot.s += slot.speed * dt;
                for c in 0..3 {
                    let w = gauss(&mut rng_tracker, tracker_sig[c]);
                    slot.tracker[c] = tracker_a * slot.tracker[c] + (1.0 - tracker_a * tracker_a).sqrt() * w;
                }
            }
            let rel = slot.s - s_e;
            if rel < -40.0 || rel > n.object_range + 40.0 {
                slot.s = if rel < 0.0 { s_e + n.object_range + 30.0 } else { s_e - 30.0 };
                slot.id = next_id;
                next_id += 1;
                slot.visible = 0;
                slot.change = None;
            }
            let center = truth.lane_center(slot.lane);
            let (base, dbase) = slot.lane_offset(t, center, cfg.traffic.lane_change_duration);
            let d = base + slot.driver.value(slot.s);
            let dd = if slot.speed > 0.0 { dbase / slot.speed } else { 0.0 } + slot.driver.slope(slot.s);
            let global = offset_pose(&course, slot.s, d, dd);
            let local = ego.between(&global);
            let pose = Pose2::new(
                local.x + slot.tracker[0],
                local.y + slot.tracker[1],
                local.theta + slot.tracker[2],
            );
            if pose.x > 0.0 && pose.x <= n.object_range && pose.y.abs() < 15.0 {
                slot.visible += 1;
                let ps = n.object_sigma.max(0.05);
                let hs = n.object_heading_sigma.max(0.005);
                objects.push(TrackedObject {
                    id: slot.id,
                    pose,
                    velocity: slot.speed,
                    covariance: Matrix3::from_diagonal(&Vector3::new(ps * ps, ps * ps, hs * hs)),
                    confirmed: slot.visible >= cfg.traffic.confirm_frames,
                });
            } else {
                slot.visible = 0;
            }
        }

        frames.push(SensorFrame {
            timestamp: t,
            control,
            smc,
            hrc,
            objects,
        });
    }
    Ok((truth, frames))
}
