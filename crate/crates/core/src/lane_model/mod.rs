//! Multi-lane clothoid model built from the fused features.
//!
//! Every frame a base clothoid (the road course) is fitted robustly to the
//! feature headings, features are grouped per lane boundary, each group
//! yields a lateral offset, and the per-boundary parameters are filtered
//! over time.

mod base;
mod grouping;
mod tracker;

pub use base::{fit_base_clothoid, BaseClothoid};
pub use grouping::{fit_lane_offsets, group_features, FeatureGroup, Grouping, LaneOffset};
pub use tracker::{coast_lanes, lanes_snapshot, predict_lanes, update_tracked_lanes, TrackedLane};

use crate::clothoid::Clothoid;
use crate::config::LaneModelConfig;
use crate::error::Error;
use crate::feature::LaneFeature;
use crate::geometry::Pose2;

/// Everything the lane model derived in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneFrame {
    /// Base clothoid used this frame (fresh fit or the propagated previous one).
    pub base: Option<BaseClothoid>,
    /// Set when the fresh fit failed.
    pub fit_error: Option<Error>,
    pub grouping: Grouping,
    pub offsets: Vec<LaneOffset>,
    pub lanes: Vec<Clothoid>,
}

#[derive(Debug, Clone)]
pub struct LaneModel {
    cfg: LaneModelConfig,
    lanes: Vec<TrackedLane>,
    base: Option<BaseClothoid>,
    next_id: u64,
}

impl LaneModel {
    pub fn new(cfg: LaneModelConfig) -> Self {
        Self {
            cfg,
            lanes: Vec::new(),
            base: None,
            next_id: 0,
        }
    }

    pub fn lanes(&self) -> &[TrackedLane] {
        &self.lanes
    }

    /// Runs one frame. `motion` is the ego displacement since the previous
    /// frame, expressed in the previous ego frame.
    pub fn process(&mut self, features: &[LaneFeature], motion: &Pose2) -> LaneFrame {
        predict_lanes(&mut self.lanes, motion, &self.cfg);
        let (base, fit_error) = match fit_base_clothoid(features, &self.cfg) {
            Ok(b) => (Some(b), None),
            Err(e) => {
                // keep the previous course, regrouping all features against it
                let prev = self.base.as_ref().map(|b| {
                    let mut p = b.propagated(motion);
                    p.inliers = (0..features.len()).collect();
                    p
                });
                (prev, Some(e))
            }
        };
        let Some(base) = base else {
            coast_lanes(&mut self.lanes, &self.cfg);
            self.base = None;
            return LaneFrame {
                base: None,
                fit_error,
                grouping: Grouping::default(),
                offsets: Vec::new(),
                lanes: lanes_snapshot(&self.lanes, self.cfg.horizon),
            };
        };
        let previous: Vec<(u64, f64)> = self.lanes.iter().map(|l| (l.id, l.y0())).collect();
        let grouping = group_features(features, &base, &previous, &self.cfg);
        let offsets = fit_lane_offsets(features, &grouping.groups, &base, &self.cfg);
        update_tracked_lanes(&mut self.lanes, &base, &offsets, &mut self.next_id, &self.cfg);
        self.base = Some(base.clone());
        LaneFrame {
            base: Some(base),
            fit_error,
            grouping,
            offsets,
            lanes: lanes_snapshot(&self.lanes, self.cfg.horizon),
        }
    }
}
