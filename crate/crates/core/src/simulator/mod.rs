//! Synthetic highway scenarios: a piecewise-clothoid road with parallel
//! lanes, an ego vehicle following its lane centre, traffic with lane
//! changes, and noisy reports of the three input sources.
//!
//! Noise defaults (documented assumptions, not measured values): marking
//! point position sigma `0.1 m + 0.002 x`, object position sigma 0.3 m,
//! driver lateral sigma 0.25 m, camera clothoid offset sigma 0.05 m.

mod generate;
mod road;
mod truth;

use serde::{Deserialize, Serialize};

pub use generate::{generate, SensorFrame};
pub use road::{RoadCourse, RoadSegment};
pub use truth::{ground_truth_local, GroundTruthMap, LaneChangeRecord, LocalBoundary, LocalTruth};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Marking features of one boundary missing over an arc-length span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dropout {
    /// Boundary index, 0 = rightmost.
    pub boundary: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub smc_range: f64,
    pub smc_offset_sigma: f64,
    pub smc_heading_sigma: f64,
    pub smc_c0_sigma: f64,
    pub smc_c1_sigma: f64,
    pub smc_confidence: f64,
    pub hrc_range: f64,
    pub hrc_fov_deg: f64,
    /// Arc spacing of marking features along each boundary (m).
    pub hrc_spacing: f64,
    pub hrc_sigma: f64,
    pub hrc_sigma_slope: f64,
    pub hrc_heading_sigma: f64,
    pub hrc_outlier_rate: f64,
    pub hrc_confidence: f64,
    pub dropouts: Vec<Dropout>,
    pub object_range: f64,
    pub object_sigma: f64,
    pub object_heading_sigma: f64,
    /// Correlation time of the tracker error (s).
    pub object_noise_time: f64,
    pub driver_lateral_sigma: f64,
    pub ego_wander_sigma: f64,
    pub odo_speed_sigma: f64,
    pub odo_yaw_rate_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            smc_range: 90.0,
            smc_offset_sigma: 0.05,
            smc_heading_sigma: 0.002,
            smc_c0_sigma: 2e-5,
            smc_c1_sigma: 2e-7,
            smc_confidence: 0.9,
            hrc_range: 130.0,
            hrc_fov_deg: 24.0,
            hrc_spacing: 5.0,
            hrc_sigma: 0.1,
            hrc_sigma_slope: 0.002,
            hrc_heading_sigma: 0.01,
            hrc_outlier_rate: 0.02,
            hrc_confidence: 0.8,
            dropouts: Vec::new(),
            object_range: 120.0,
            object_sigma: 0.3,
            object_heading_sigma: 0.01,
            object_noise_time: 20.0,
            driver_lateral_sigma: 0.25,
            ego_wander_sigma: 0.1,
            odo_speed_sigma: 0.05,
            odo_yaw_rate_sigma: 0.001,
        }
    }
}

impl NoiseConfig {
    /// Every noise source switched off.
    pub fn zero() -> Self {
        Self {
            smc_offset_sigma: 0.0,
            smc_heading_sigma: 0.0,
            smc_c0_sigma: 0.0,
            smc_c1_sigma: 0.0,
            hrc_sigma: 0.0,
            hrc_sigma_slope: 0.0,
            hrc_heading_sigma: 0.0,
            hrc_outlier_rate: 0.0,
            object_sigma: 0.0,
            object_heading_sigma: 0.0,
            driver_lateral_sigma: 0.0,
            ego_wander_sigma: 0.0,
            odo_speed_sigma: 0.0,
            odo_yaw_rate_sigma: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub lane: usize,
    /// Initial arc distance ahead of the ego vehicle (m).
    pub distance: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChange {
    /// Index into `traffic.objects`.
    pub object: usize,
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub objects: Vec<ObjectSpec>,
    pub lane_changes: Vec<LaneChange>,
    pub lane_change_duration: f64,
    /// Frames an object must be visible before it is reported confirmed.
    pub confirm_frames: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            objects: Vec::new(),
            lane_changes: Vec::new(),
            lane_change_duration: 3.0,
            confirm_frames: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub road: Vec<RoadSegment>,
    pub lane_count: usize,
    pub lane_width: f64,
    pub ego_lane: usize,
    pub ego_speed: f64,
    /// Arc position of the ego vehicle at t = 0.
    pub start_arc: f64,
    pub duration: f64,
    pub frame_rate: f64,
    /// Frames excluded from the accumulated evaluation while the model settles.
    pub warmup_frames: usize,
    pub noise: NoiseConfig,
    pub traffic: TrafficConfig,
    /// Pipeline parameters for this scenario (defaults when absent).
    pub pipeline: PipelineConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            seed: 0,
            road: vec![RoadSegment {
                length: 3000.0,
                c0: 0.0,
                c1: 0.0,
            }],
            lane_count: 3,
            lane_width: 3.5,
            ego_lane: 1,
            ego_speed: 30.0,
            start_arc: 20.0,
            duration: 60.0,
            frame_rate: 10.0,
            warmup_frames: 20,
            noise: NoiseConfig::default(),
            traffic: TrafficConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lane_count < 1 {
            return bad("lane_count must be >= 1".into());
        }
        if !(self.lane_width > 0.0) {
            return bad("lane_width must be > 0".into());
        }
        if self.ego_lane >= self.lane_count {
            return bad(format!("ego_lane {} does not exist ({} lanes)", self.ego_lane, self.lane_count));
        }
        if !(self.frame_rate > 0.0) || !(self.duration > 0.0) {
            return bad("frame_rate and duration must be > 0".into());
        }
        if !(self.ego_speed >= 0.0) || !(self.start_arc >= 0.0) {
            return bad("ego_speed and start_arc must be >= 0".into());
        }
        if self.road.is_empty() || self.road.iter().any(|s| !(s.length > 0.0)) {
            return bad("road needs at least one segment of positive length".into());
        }
        if self.road.iter().any(|s| !s.c0.is_finite() || !s.c1.is_finite()) {
            return bad("non-finite road curvature".into());
        }
        let n = &self.noise;
        let sigmas = [
            n.smc_offset_sigma,
            n.smc_heading_sigma,
            n.smc_c0_sigma,
            n.smc_c1_sigma,
            n.hrc_sigma,
            n.hrc_sigma_slope,
            n.hrc_heading_sigma,
            n.object_sigma,
            n.object_heading_sigma,
            n.driver_lateral_sigma,
            n.ego_wander_sigma,
            n.odo_speed_sigma,
            n.odo_yaw_rate_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise sigmas must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&n.hrc_outlier_rate) {
            return bad("hrc_outlier_rate must be in [0, 1]".into());
        }
        if !(n.hrc_spacing > 0.0) || !(n.object_noise_time > 0.0) {
            return bad("hrc_spacing and object_noise_time must be > 0".into());
        }
        for d in &n.dropouts {
            if d.boundary > self.lane_count {
                return bad(format!("dropout on boundary {} of {}", d.boundary, self.lane_count + 1));
            }
            if !(d.to > d.from) {
                return bad("dropout span must have to > from".into());
            }
        }
        let t = &self.traffic;
        if !(t.lane_change_duration > 0.0) {
            return bad("lane_change_duration must be > 0".into());
        }
        for (i, o) in t.objects.iter().enumerate() {
            if o.lane >= self.lane_count {
                return bad(format!("object {i} in nonexistent lane {}", o.lane));
            }
            if !(o.speed >= 0.0) {
                return bad(format!("object {i} speed must be >= 0"));
            }
        }
        // replay the lane sequence of every object
        let mut lanes: Vec<usize> = t.objects.iter().map(|o| o.lane).collect();
        let mut events = t.lane_changes.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut busy_until = vec![f64::NEG_INFINITY; lanes.len()];
        for e in &events {
            if e.object >= lanes.len() {
                return bad(format!("lane change for nonexistent object {}", e.object));
            }
            if e.to >= self.lane_count || e.from >= self.lane_count {
                return bad(format!("lane change {} -> {} to a nonexistent lane", e.from, e.to));
            }
            if lanes[e.object] != e.from {
                return bad(format!(
                    "object {} is in lane {} at t = {}, not {}",
                    e.object, lanes[e.object], e.time, e.from
                ));
            }
            if e.time < busy_until[e.object] {
                return bad(format!("overlapping lane changes of object {}", e.object));
            }
            lanes[e.object] = e.to;
            busy_until[e.object] = e.time + t.lane_change_duration;
        }
        Ok(())
    }
}
