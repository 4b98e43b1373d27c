//! Ground-truth comparison: lateral deviation of the estimated lane
//! boundaries every 10 m, accumulated per distance and lane class.

mod run;

use serde::{Deserialize, Serialize};

pub use run::{
    measure_frame_runtime, replay_frames, replay_frames_with, run_scenario, EgoTracking, LaneSnapshot, RunError,
    RuntimeStats, ScenarioRun,
};

use crate::clothoid::Clothoid;
use crate::graph::Side;
use crate::pipeline::SwitchRecord;
use crate::simulator::{LaneChangeRecord, LocalTruth};

/// Longitudinal sample positions (m).
pub const SAMPLE_DISTANCES: [f64; 13] = [
    0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0,
];
/// An estimate further than this from every true boundary at x = 0 is unmatched (m).
pub const MATCH_GATE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneClass {
    /// The two boundaries of the lane the vehicle drives in.
    Ego,
    /// The next boundary outward on either side.
    Adjacent,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// Index into [`SAMPLE_DISTANCES`].
    pub sample: usize,
    pub class: LaneClass,
    /// Matched true boundary.
    pub boundary: usize,
    /// Estimate minus truth, positive toward +y.
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameDeviations {
    pub samples: Vec<Deviation>,
    pub unmatched: usize,
    /// Boundary index matched by each estimate (`None` when unmatched), in
    /// input order.
    pub matches: Vec<Option<usize>>,
}

/// Class of every true boundary from its lateral position at x = 0.
pub fn classify_boundaries(truth: &LocalTruth) -> Vec<LaneClass> {
    let y: Vec<Option<f64>> = truth.boundaries.iter().map(|b| b.y_at(0.0)).collect();
    // boundaries are ordered right to left; the ego lane lies between the
    // last one right of the vehicle and the first one left of it
    let left = y.iter().position(|v| v.is_some_and(|v| v >= 0.0));
    let right = y.iter().rposition(|v| v.is_some_and(|v| v < 0.0));
    (0..y.len())
        .map(|k| {
            let rank = match (left, right) {
                (Some(l), _) if k >= l => k - l,
                (_, Some(r)) if k <= r => r - k,
                _ => usize::MAX,
            };
            match rank {
                0 => LaneClass::Ego,
                1 => LaneClass::Adjacent,
                _ => LaneClass::Outer,
            }
        })
        .collect()
}

/// Matches every estimate to the nearest true boundary at x = 0 and records
/// its signed deviation at each sample distance. The result for an estimate
/// does not depend on the other estimates or their order.
pub fn frame_deviations(lanes: &[Clothoid], truth: &LocalTruth) -> FrameDeviations {
    let classes = classify_boundaries(truth);
    let mut out = FrameDeviations::default();
    for lane in lanes {
        let y0 = lane.y_at(0.0);
        let mut best: Option<(f64, usize)> = None;
        for (k, b) in truth.boundaries.iter().enumerate() {
            let Some(t) = b.y_at(0.0) else { continue };
            let d = (y0 - t).abs();
            // ties go to the lower index so the choice is order independent
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, k));
            }
        }
        match best {
            Some((d, k)) if d <= MATCH_GATE => {
                out.matches.push(Some(k));
                let b = &truth.boundaries[k];
                for (i, &x) in SAMPLE_DISTANCES.iter().enumerate() {
                    if let Some(t) = b.y_at(x) {
                        out.samples.push(Deviation {
                            sample: i,
                            class: classes[k],
                            boundary: k,
                            value: lane.y_at(x) - t,
                        });
                    }
                }
            }
            _ => {
                out.matches.push(None);
                out.unmatched += 1;
            }
        }
    }
    out
}

/// Streaming count, mean and centred second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two partial accumulations.
    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.n = n;
    }

    /// Population standard deviation.
    pub fn sigma(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.m2.max(0.0) / self.n as f64).sqrt()
    }

    pub fn rmse(&self) -> f64 {
        (self.mean * self.mean + self.sigma().powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationTable {
    pub ego: Vec<Moments>,
    pub adjacent: Vec<Moments>,
    pub outer: Vec<Moments>,
    /// Per true boundary, right to left.
    pub boundaries: Vec<Vec<Moments>>,
    pub frames: u64,
    pub unmatched: u64,
}

impl Default for DeviationTable {
    fn default() -> Self {
        let row = vec![Moments::default(); SAMPLE_DISTANCES.len()];
        Self {
            ego: row.clone(),
            adjacent: row.clone(),
            outer: row,
            boundaries: Vec::new(),
            frames: 0,
            unmatched: 0,
        }
    }
}

/// One row of the report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub distance: f64,
    pub class: String,
    pub n: u64,
    pub mean: f64,
    pub sigma: f64,
    pub rmse: f64,
}

impl DeviationTable {
    pub fn add_frame(&mut self, f: &FrameDeviations) {
        self.frames += 1;
        self.unmatched += f.unmatched as u64;
        for s in &f.samples {
            let row = match s.class {
                LaneClass::Ego => &mut self.ego,
                LaneClass::Adjacent => &mut self.adjacent,
                LaneClass::Outer => &mut self.outer,
            };
            row[s.sample].push(s.value);
            if self.boundaries.len() <= s.boundary {
                self.boundaries
                    .resize(s.boundary + 1, vec![Moments::default(); SAMPLE_DISTANCES.len()]);
            }
            self.boundaries[s.boundary][s.sample].push(s.value);
        }
    }

    pub fn merge(&mut self, o: &DeviationTable) {
        for (a, b) in [(&mut self.ego, &o.ego), (&mut self.adjacent, &o.adjacent), (&mut self.outer, &o.outer)] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        if self.boundaries.len() < o.boundaries.len() {
            self.boundaries
                .resize(o.boundaries.len(), vec![Moments::default(); SAMPLE_DISTANCES.len()]);
        }
        for (a, b) in self.boundaries.iter_mut().zip(&o.boundaries) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        self.frames += o.frames;
        self.unmatched += o.unmatched;
    }

    /// Rows in a fixed order: ego, adjacent, outer, then each boundary, each
    /// over all sample distances.
    pub fn rows(&self) -> Vec<TableRow> {
        let mut out = Vec::new();
        let mut emit = |name: String, m: &[Moments]| {
            for (i, c) in m.iter().enumerate() {
                out.push(TableRow {
                    distance: SAMPLE_DISTANCES[i],
                    class: name.clone(),
                    n: c.n,
                    mean: c.mean,
                    sigma: c.sigma(),
                    rmse: c.rmse(),
                });
            }
        };
        emit("ego".into(), &self.ego);
        emit("adjacent".into(), &self.adjacent);
        emit("outer".into(), &self.outer);
        for (k, b) in self.boundaries.iter().enumerate() {
            emit(format!("boundary_{k}"), b);
        }
        out
    }

    /// `distance,class,n,mean,sigma,rmse`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance,class,n,mean,sigma,rmse\n");
        for r in self.rows() {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                r.distance, r.class, r.n, r.mean, r.sigma, r.rmse
            ));
        }
        s
    }

    pub fn summary(&self) -> Summary {
        let pick = |m: &[Moments]| m.iter().map(|c| c.rmse()).collect::<Vec<_>>();
        let every_20 = |v: &[f64]| v.iter().step_by(2).copied().collect::<Vec<_>>();
        let ego = pick(&self.ego);
        let adjacent = pick(&self.adjacent);
        Summary {
            frames: self.frames,
            unmatched: self.unmatched,
            distances: SAMPLE_DISTANCES.to_vec(),
            ego_rmse_20m: every_20(&ego),
            adjacent_rmse_20m: every_20(&adjacent),
            ego_rmse: ego,
            adjacent_rmse: adjacent,
        }
    }
}

/// Compact record of the accumulated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: u64,
    pub unmatched: u64,
    pub distances: Vec<f64>,
    pub ego_rmse: Vec<f64>,
    pub adjacent_rmse: Vec<f64>,
    /// The 0, 20, ..., 120 m subset.
    pub ego_rmse_20m: Vec<f64>,
    pub adjacent_rmse_20m: Vec<f64>,
}

/// Merges per-frame or per-scenario tables.
pub fn accumulate<'a>(tables: impl IntoIterator<Item = &'a DeviationTable>) -> DeviationTable {
    let mut acc = DeviationTable::default();
    for t in tables {
        acc.merge(t);
    }
    acc
}

/// Switch of the smoothing edge that crosses the middle of a lane change on
/// one side of the object: its end points lie on either side of the lane
/// boundary the object centre crosses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSwitch {
    pub object: u64,
    pub side: Option<Side>,
    /// Time at which the object centre crosses the boundary.
    pub crossing: f64,
    pub created: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSummary {
    pub maneuver: Vec<ManeuverSwitch>,
    /// Manoeuvres without a smoothing edge across the crossing (object
    /// invisible or unconfirmed at that time).
    pub unobserved: usize,
    /// Smoothing edges created outside every lane-change window of their object.
    pub steady: usize,
    /// Of those, edges with `s > 0.9`.
    pub steady_active: usize,
}

impl SwitchSummary {
    pub fn steady_active_fraction(&self) -> f64 {
        if self.steady == 0 {
            1.0
        } else {
            self.steady_active as f64 / self.steady as f64
        }
    }
}

/// Splits the final switch values into the edges across each lane-change
/// crossing and the edges away from any manoeuvre.
pub fn summarize_switches(changes: &[LaneChangeRecord], switches: &[SwitchRecord]) -> SwitchSummary {
    let mut maneuver = Vec::new();
    let mut unobserved = 0;
    for c in changes {
        let crossing = (c.start + c.end) / 2.0;
        for side in [Some(Side::Left), Some(Side::Right)] {
            // the first edge inserted at or after the crossing links the last
            // feature before it to the first one after
            let first = switches
                .iter()
                .filter(|s| s.object == c.object_id && s.side == side && s.created >= crossing && s.created <= c.end)
                .min_by(|a, b| a.created.total_cmp(&b.created).then(a.edge.cmp(&b.edge)));
            match first {
                Some(s) => maneuver.push(ManeuverSwitch {
                    object: c.object_id,
                    side,
                    crossing,
                    created: s.created,
                    value: s.value,
                }),
                None => unobserved += 1,
            }
        }
    }
    let in_window = |s: &SwitchRecord| {
        changes
            .iter()
            .any(|c| c.object_id == s.object && s.created >= c.start && s.created <= c.end)
    };
    let steady: Vec<&SwitchRecord> = switches.iter().filter(|s| !in_window(s)).collect();
    SwitchSummary {
        maneuver,
        unobserved,
        steady: steady.len(),
        steady_active: steady.iter().filter(|s| s.value > 0.9).count(),
    }
}

#[cfg(test)]
mod tests;
