//! One perception step per sensor frame: ingest, graph building, solving,
//! feature extraction and multi-lane modelling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clothoid::Clothoid;
use crate::config::PipelineConfig;
use crate::geometry::Pose2;
use crate::graph::{EdgeId, EdgeKind, FusionGraph, Side, Source};
use crate::ingest::{current_lane_width, ingest_hrc_features, object_to_features, sample_smc_features};
use crate::lane_model::{LaneFrame, LaneModel};
use crate::optimizer::{extract_fused_features, solve, SolveError, SolveReport};
use crate::simulator::SensorFrame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("frame {frame}: invalid control input: {msg}")]
    Control { frame: usize, msg: String },
    #[error("frame {frame}: {source}")]
    Solve {
        frame: usize,
        #[source]
        source: SolveError,
    },
}

/// Last optimised value of one smoothing edge's switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub edge: EdgeId,
    pub object: u64,
    pub side: Option<Side>,
    /// Timestamp of the frame that inserted the edge.
    pub created: f64,
    pub value: f64,
}

/// Lane boundary estimate with the id of its track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneEstimate {
    pub track: u64,
    pub clothoid: Clothoid,
}

/// Per-frame counts of what entered the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub smc: usize,
    pub hrc: usize,
    pub objects: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub timestamp: f64,
    /// Lanes sorted by `y0` descending.
    pub lanes: Vec<LaneEstimate>,
    pub counts: IngestCounts,
    pub solve: SolveReport,
    pub fused_features: usize,
    pub model: LaneFrame,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    graph: FusionGraph,
    model: LaneModel,
    frames: usize,
    switches: BTreeMap<EdgeId, SwitchRecord>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            graph: FusionGraph::new(cfg.graph.clone()),
            model: LaneModel::new(cfg.lane.clone()),
            cfg,
            frames: 0,
            switches: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &FusionGraph {
        &self.graph
    }

    pub fn frames_processed(&self) -> usize {
        self.frames
    }

    /// Every smoothing switch seen so far with its latest value.
    pub fn switch_history(&self) -> impl Iterator<Item = &SwitchRecord> {
        self.switches.values()
    }

    pub fn step(&mut self, frame: &SensorFrame) -> Result<FrameOutput, PipelineError> {
        let index = self.frames;
        let ingest = &self.cfg.ingest;
        // the first frame defines the origin; later ones move the graph
        let motion = if index == 0 {
            Pose2::IDENTITY
        } else {
            frame.control.validate().map_err(|e| PipelineError::Control {
                frame: index,
                msg: e.to_string(),
            })?;
            self.graph.advance_odometry(&frame.control);
            frame.control.motion_delta()
        };
        let ego = self.graph.current_pose();
        let mut counts = IngestCounts::default();

        if let Some(smc) = &frame.smc {
            let s = sample_smc_features(smc, ingest);
            for f in s.left.iter().chain(&s.right) {
                match self.graph.add_measurement(Source::Smc, f, ego) {
                    Ok(_) => counts.smc += 1,
                    Err(_) => counts.rejected += 1,
                }
            }
        }
        if let Some(hrc) = &frame.hrc {
            let h = ingest_hrc_features(hrc, ingest);
            counts.rejected += h.dropped_invalid;
            for f in &h.features {
                match self.graph.add_measurement(Source::Hrc, f, ego) {
                    Ok(_) => counts.hrc += 1,
                    Err(_) => counts.rejected += 1,
                }
            }
        }
        let width = current_lane_width(frame.smc.as_ref(), ingest);
        for o in &frame.objects {
            match object_to_features(o, width.width, ingest) {
                Ok(Some((l, r))) => {
                    match self.graph.add_object_measurement(o.id, &l, &r, width.width, width.measured, ego) {
                        Ok(_) => counts.objects += 1,
                        Err(_) => counts.rejected += 1,
                    }
                }
                Ok(None) => {}
                Err(_) => counts.rejected += 1,
            }
        }

        let report = solve(&mut self.graph, &self.cfg.solver).map_err(|source| PipelineError::Solve {
            frame: index,
            source,
        })?;
        for e in self.graph.edges().filter(|e| e.kind == EdgeKind::Smoothing) {
            let Some(sid) = e.switch else { continue };
            let value = self.graph.switch(sid).map_or(1.0, |s| s.value);
            let tag = e.object.expect("smoothing edges carry their object");
            self.switches
                .entry(e.id)
                .or_insert(SwitchRecord {
                    edge: e.id,
                    object: tag.object,
                    side: tag.side,
                    created: frame.timestamp,
                    value,
                })
                .value = value;
        }

        let fused: Vec<_> = extract_fused_features(&self.graph, &self.cfg.solver)
            .into_iter()
            .map(|(_, f)| f)
            .collect();
        let model = self.model.process(&fused, &motion);
        let mut lanes: Vec<LaneEstimate> = self
            .model
            .lanes()
            .iter()
            .map(|l| LaneEstimate {
                track: l.id,
                clothoid: l.clothoid(self.cfg.lane.horizon),
            })
            .collect();
        lanes.sort_by(|a, b| b.clothoid.y0.total_cmp(&a.clothoid.y0));
        self.frames += 1;
        Ok(FrameOutput {
            timestamp: frame.timestamp,
            lanes,
            counts,
            solve: report,
            fused_features: fused.len(),
            model,
        })
    }
}
