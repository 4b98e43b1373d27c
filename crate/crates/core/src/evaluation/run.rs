//! Driving the pipeline over a frame sequence with per-frame evaluation.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{classify_boundaries, frame_deviations, DeviationTable, LaneClass};
use crate::config::PipelineConfig;
use crate::error::Error;
use crate::pipeline::{FrameOutput, LaneEstimate, Pipeline, PipelineError, SwitchRecord};
use crate::simulator::{generate, ground_truth_local, GroundTruthMap, ScenarioConfig, SensorFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Wall-clock duration of one full pipeline step.
pub fn measure_frame_runtime(
    p: &mut Pipeline,
    frame: &SensorFrame,
) -> Result<(FrameOutput, Duration), PipelineError> {
    let t = Instant::now();
    let out = p.step(frame)?;
    // never report zero, even on coarse clocks
    Ok((out, t.elapsed().max(Duration::from_nanos(1))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub frames: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub durations_ms: Vec<f64>,
}

impl RuntimeStats {
    pub fn from_durations(d: &[Duration]) -> Self {
        let ms: Vec<f64> = d.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        let mut sorted = ms.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if sorted.is_empty() {
                0.0
            } else {
                sorted[((sorted.len() - 1) as f64 * p).round() as usize]
            }
        };
        let median = match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
        };
        Self {
            frames: ms.len(),
            median_ms: median,
            mean_ms: if ms.is_empty() { 0.0 } else { ms.iter().sum::<f64>() / ms.len() as f64 },
            p95_ms: q(0.95),
            max_ms: q(1.0),
            durations_ms: ms,
        }
    }
}

/// Lane estimates of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSnapshot {
    pub frame: usize,
    pub timestamp: f64,
    pub lanes: Vec<LaneEstimate>,
}

/// Continuity of the ego-lane boundary estimates after warm-up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoTracking {
    pub frames: usize,
    /// Frames in which an ego boundary had no matching estimate.
    pub gap_frames: usize,
    /// Times the track matched to an ego boundary changed identity.
    pub track_changes: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub truth: Option<GroundTruthMap>,
    /// Deviation statistics after warm-up; `None` without ground truth.
    pub table: Option<DeviationTable>,
    /// The same statistics per frame (empty tables during warm-up).
    pub frame_tables: Vec<DeviationTable>,
    pub ego: Option<EgoTracking>,
    pub snapshots: Vec<LaneSnapshot>,
    pub runtimes: Vec<Duration>,
    pub switches: Vec<SwitchRecord>,
}

impl ScenarioRun {
    pub fn runtime_stats(&self) -> RuntimeStats {
        RuntimeStats::from_durations(&self.runtimes)
    }
}

/// Runs the pipeline over recorded frames; evaluates against `truth` when
/// given, skipping the first `warmup` frames.
pub fn replay_frames(
    frames: &[SensorFrame],
    truth: Option<GroundTruthMap>,
    cfg: &PipelineConfig,
    warmup: usize,
) -> Result<ScenarioRun, PipelineError> {
    replay_frames_with(frames, truth, cfg, warmup, |_, _| {})
}

/// [`replay_frames`] with a hook called after every step.
pub fn replay_frames_with(
    frames: &[SensorFrame],
    truth: Option<GroundTruthMap>,
    cfg: &PipelineConfig,
    warmup: usize,
    mut on_frame: impl FnMut(usize, &Pipeline),
) -> Result<ScenarioRun, PipelineError> {
    let mut p = Pipeline::new(cfg.clone());
    let mut table = truth.as_ref().map(|_| DeviationTable::default());
    let mut ego = truth.as_ref().map(|_| EgoTracking::default());
    let mut ego_tracks: BTreeMap<usize, u64> = BTreeMap::new();
    let mut snapshots = Vec::with_capacity(frames.len());
    let mut runtimes = Vec::with_capacity(frames.len());
    let mut frame_tables = Vec::new();
    for (k, f) in frames.iter().enumerate() {
        let (out, dt) = measure_frame_runtime(&mut p, f)?;
        runtimes.push(dt);
        on_frame(k, &p);
        if let (Some(map), Some(table), Some(ego)) = (&truth, table.as_mut(), ego.as_mut()) {
            if k >= warmup && k < map.ego_poses.len() {
                let local = ground_truth_local(map, &map.ego_poses[k]);
                let clothoids: Vec<_> = out.lanes.iter().map(|l| l.clothoid).collect();
                let dev = frame_deviations(&clothoids, &local);
                table.add_frame(&dev);
                let mut single = DeviationTable::default();
                single.add_frame(&dev);
                frame_tables.resize(k, DeviationTable::default());
                frame_tables.push(single);
                let classes = classify_boundaries(&local);
                ego.frames += 1;
                let mut gap = false;
                for (b, _) in classes.iter().enumerate().filter(|(_, c)| **c == LaneClass::Ego) {
                    let tracks: Vec<u64> = dev
                        .matches
                        .iter()
                        .zip(&out.lanes)
                        .filter(|(m, _)| **m == Some(b))
                        .map(|(_, l)| l.track)
                        .collect();
                    if tracks.is_empty() {
                        gap = true;
                        ego_tracks.remove(&b);
                        continue;
                    }
                    match ego_tracks.get(&b) {
                        Some(prev) if tracks.contains(prev) => {}
                        Some(_) => {
                            ego.track_changes += 1;
                            ego_tracks.insert(b, tracks[0]);
                        }
                        None => {
                            ego_tracks.insert(b, tracks[0]);
                        }
                    }
                }
                if gap {
                    ego.gap_frames += 1;
                }
            }
        }
        snapshots.push(LaneSnapshot {
            frame: k,
            timestamp: out.timestamp,
            lanes: out.lanes,
        });
    }
    Ok(ScenarioRun {
        truth,
        table,
        frame_tables,
        ego,
        snapshots,
        runtimes,
        switches: p.switch_history().copied().collect(),
    })
}

/// Generates a scenario and runs it end to end, optionally truncated to
/// `max_frames`.
pub fn run_scenario(cfg: &ScenarioConfig, max_frames: Option<usize>) -> Result<ScenarioRun, RunError> {
    let (truth, mut frames) = generate(cfg)?;
    if let Some(n) = max_frames {
        frames.truncate(n);
    }
    Ok(replay_frames(&frames, Some(truth), &cfg.pipeline, cfg.warmup_frames)?)
}
