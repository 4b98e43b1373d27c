//! Tunable parameters of the perception pipeline.
//!
//! Every value here has a default; [`PipelineConfig::apply_override`] accepts
//! dotted `key=value` assignments (e.g. `graph.window=30`) and type-checks them
//! by round-tripping through the serde representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Lane width assumed when the serial camera gives none (m).
    pub default_lane_width: f64,
    /// Plausibility gate for camera-derived lane widths (m).
    pub lane_width_min: f64,
    pub lane_width_max: f64,
    /// Lateral spread of drivers around the lane centre (m).
    pub driver_lateral_sigma: f64,
    /// Initial confidence of object-derived features.
    pub object_confidence: f64,
    /// Longitudinal sampling step of serial-camera clothoids (m).
    pub smc_sample_spacing: f64,
    /// Along-marking standard deviation given to clothoid samples (m).
    pub smc_longitudinal_sigma: f64,
    pub smc_max_range: f64,
    pub hrc_max_range: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            default_lane_width: 3.5,
            lane_width_min: 2.5,
            lane_width_max: 4.5,
            driver_lateral_sigma: 0.25,
            object_confidence: 0.5,
            smc_sample_spacing: 2.0,
            smc_longitudinal_sigma: 1.0,
            smc_max_range: 90.0,
            hrc_max_range: 130.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Number of past ego poses kept (tau); the graph holds at most tau+1.
    pub window: usize,
    /// Feature vertices further than this behind the ego vehicle are pruned (m).
    pub prune_behind: f64,
    /// Association gates.
    pub assoc_max_distance: f64,
    pub assoc_max_heading_deg: f64,
    /// Chi-square threshold on the 3-dof Mahalanobis distance (95 %).
    pub assoc_chi2: f64,
    /// Odometry noise: sigma_xy = rel * |dx| + abs, sigma_theta likewise.
    pub odo_trans_rel: f64,
    pub odo_trans_abs: f64,
    pub odo_rot_rel: f64,
    pub odo_rot_abs: f64,
    /// Lane-width constraint sigma when the width came from the camera / was assumed.
    pub width_sigma_measured: f64,
    pub width_sigma_default: f64,
    /// Heading-equality sigma of the lane-width constraint (rad).
    pub width_sigma_theta: f64,
    pub smoothing_sigma_y: f64,
    pub smoothing_sigma_theta: f64,
    /// Information of the switch prior `(1 - s)^2`.
    pub switch_prior: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            window: 50,
            prune_behind: 5.0,
            assoc_max_distance: 1.0,
            assoc_max_heading_deg: 20.0,
            assoc_chi2: 7.814_727_903_251_178,
            odo_trans_rel: 0.02,
            odo_trans_abs: 0.01,
            odo_rot_rel: 0.01,
            odo_rot_abs: 0.002,
            width_sigma_measured: 0.15,
            width_sigma_default: 0.3,
            width_sigma_theta: 0.02,
            smoothing_sigma_y: 0.1,
            smoothing_sigma_theta: 0.02,
            switch_prior: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// Marginal blocks of the inverse normal matrix.
    Marginal,
    /// Diagonal scaled by the inverse vertex confidence.
    ConfidenceDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the largest update component.
    pub tolerance: f64,
    pub max_halvings: usize,
    pub covariance: CovarianceMode,
    /// Per-axis sigma of the fallback diagonal at confidence 1.
    pub fallback_sigma: [f64; 3],
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            tolerance: 1e-6,
            max_halvings: 5,
            covariance: CovarianceMode::Marginal,
            fallback_sigma: [0.5, 0.2, 0.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneModelConfig {
    /// Standardised residual above which a heading is discarded.
    pub outlier_threshold: f64,
    pub max_trim_iterations: usize,
    pub min_fit_features: usize,
    pub min_fit_span: f64,
    pub max_outlier_fraction: f64,
    /// Lower bound on the robust residual scale (rad).
    pub residual_scale_floor: f64,
    /// Lane width used for the grouping gate (`lane_width / 4`).
    pub lane_width: f64,
    pub cluster_radius: f64,
    pub cluster_near_range: f64,
    pub min_cluster_support: usize,
    pub min_group_size: usize,
    /// Random-walk process noise per frame for `[y0, theta0, c0, c1]`.
    pub process_sigma: [f64; 4],
    /// Lower bounds on the measurement noise for `[y0, theta0, c0, c1]`.
    pub measurement_sigma_floor: [f64; 4],
    /// Initial state sigma for new lanes.
    pub initial_sigma: [f64; 4],
    pub max_missed_frames: u32,
    /// Tracks closer than this at x = 0 are merged (m).
    pub min_lane_separation: f64,
    /// Validity interval end of emitted lane clothoids (m).
    pub horizon: f64,
    /// Treat boundaries as normal offsets of the course (exact on curves)
    /// instead of pure lateral shifts.
    pub parallel_offsets: bool,
}

impl Default for LaneModelConfig {
    fn default() -> Self {
        Self {
            outlier_threshold: 2.5,
            max_trim_iterations: 10,
            min_fit_features: 3,
            min_fit_span: 20.0,
            max_outlier_fraction: 0.5,
            residual_scale_floor: 1e-6,
            lane_width: 3.5,
            cluster_radius: 0.5,
            cluster_near_range: 40.0,
            min_cluster_support: 3,
            min_group_size: 3,
            process_sigma: [0.05, 0.005, 1e-5, 1e-7],
            measurement_sigma_floor: [0.02, 1e-3, 2e-5, 2e-7],
            initial_sigma: [1.0, 0.05, 1e-3, 1e-5],
            max_missed_frames: 10,
            min_lane_separation: 2.0,
            horizon: 120.0,
            parallel_offsets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub graph: GraphConfig,
    pub solver: SolverConfig,
    pub lane: LaneModelConfig,
}

impl PipelineConfig {
    /// Applies a `dotted.key=value` override. The value is parsed as TOML
    /// (numbers, booleans, arrays, quoted strings); bare words are taken as
    /// strings.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        let key = key.trim();
        let value = parse_scalar(raw.trim());
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        set_path(&mut tree, key, value)?;
        *self = serde_json::from_value(tree)
            .map_err(|e| Error::Config(format!("override '{key}': {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_scalar(raw: &str) -> serde_json::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(t) => serde_json::to_value(&t["v"]).unwrap_or(serde_json::Value::Null),
        Err(_) => serde_json::Value::String(raw.to_string()),
    }
}

pub(crate) fn set_path(
    tree: &mut serde_json::Value,
    key: &str,
    value: serde_json::Value,
) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("'{key}': '{part}' is not a table")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}
