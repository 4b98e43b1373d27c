//! Conversion of the raw input sources into lists of [`LaneFeature`]s:
//! serial-camera (SMC) ego-lane clothoids, high-resolution camera (HRC)
//! marking points, and tracked traffic participants.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::clothoid::Clothoid;
use crate::config::IngestConfig;
use crate::error::{Error, Result};
use crate::feature::LaneFeature;
use crate::geometry::Pose2;

/// Standard deviations of the four clothoid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClothoidSigma {
    pub y0: f64,
    pub theta0: f64,
    pub c0: f64,
    pub c1: f64,
}

/// Ego-lane boundaries reported by the serial camera. A side is `None` when
/// its marking was not detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcLaneReport {
    pub left: Option<Clothoid>,
    pub right: Option<Clothoid>,
    pub detection_range: f64,
    pub sigma: ClothoidSigma,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrcFeatureReport {
    pub features: Vec<LaneFeature>,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub id: u64,
    /// Object centre; heading is the direction of motion.
    pub pose: Pose2,
    pub velocity: f64,
    pub covariance: Matrix3<f64>,
    /// Confirmed by at least one radar and one camera measurement.
    pub confirmed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmcFeatures {
    pub left: Vec<LaneFeature>,
    pub right: Vec<LaneFeature>,
}

/// Samples both boundaries of an SMC report every `smc_sample_spacing`
/// metres from x = 0 up to the detection range.
pub fn sample_smc_features(r: &SmcLaneReport, cfg: &IngestConfig) -> SmcFeatures {
    let range = r.detection_range.min(cfg.smc_max_range);
    let side = |c: &Option<Clothoid>| match c {
        Some(c) if c.validate().is_ok() && range > 0.0 => sample_clothoid(c, range, r, cfg),
        _ => Vec::new(),
    };
    SmcFeatures {
        left: side(&r.left),
        right: side(&r.right),
    }
}

fn sample_clothoid(
    c: &Clothoid,
    range: f64,
    r: &SmcLaneReport,
    cfg: &IngestConfig,
) -> Vec<LaneFeature> {
    let step = cfg.smc_sample_spacing;
    let end = range.min(c.x_max);
    let var = Vector4::new(
        r.sigma.y0 * r.sigma.y0,
        r.sigma.theta0 * r.sigma.theta0,
        r.sigma.c0 * r.sigma.c0,
        r.sigma.c1 * r.sigma.c1,
    );
    let s_long2 = cfg.smc_longitudinal_sigma * cfg.smc_longitudinal_sigma;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let x = k as f64 * step;
        k += 1;
        if x > end + 1e-9 {
            break;
        }
        if x < c.x_min {
            continue;
        }
        let y = c.y_at(x);
        let theta = c.heading_at(x);
        // first-order propagation of the parameter variances
        let jy = Vector4::new(1.0, x, x * x / 2.0, x * x * x / 6.0);
        let jt = Vector4::new(0.0, 1.0, x, x * x / 2.0);
        let var_y = jy.component_mul(&jy).dot(&var);
        let var_t = jt.component_mul(&jt).dot(&var);
        let cov_yt = jy.component_mul(&jt).dot(&var);
        let (s, co) = theta.sin_cos();
        let cov = Matrix3::new(
            s_long2 * co * co,
            s_long2 * co * s,
            0.0,
            s_long2 * co * s,
            var_y + s_long2 * s * s,
            cov_yt,
            0.0,
            cov_yt,
            var_t,
        );
        out.push(LaneFeature::new(Pose2::new(x, y, theta), r.confidence, cov));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HrcIngest {
    pub features: Vec<LaneFeature>,
    pub dropped_out_of_range: usize,
    pub dropped_invalid: usize,
}

/// Passes HRC features through, clipping at the report's range (never beyond
/// the configured maximum) and dropping features with unusable covariances.
pub fn ingest_hrc_features(r: &HrcFeatureReport, cfg: &IngestConfig) -> HrcIngest {
    let range = r.max_range.min(cfg.hrc_max_range);
    let mut out = HrcIngest::default();
    for f in &r.features {
        if f.pose.x > range {
            out.dropped_out_of_range += 1;
        } else if f.validate().is_err() || f.information().is_err() {
            out.dropped_invalid += 1;
        } else {
            out.features.push(*f);
        }
    }
    out
}

/// Two pseudo-marking features at `±w/2` perpendicular to the object's
/// heading. `None` for unconfirmed objects and objects not ahead of the ego
/// vehicle.
pub fn object_to_features(
    o: &TrackedObject,
    lane_width: f64,
    cfg: &IngestConfig,
) -> Result<Option<(LaneFeature, LaneFeature)>> {
    if !(2.5..=4.5).contains(&lane_width) {
        return Err(Error::InvalidArgument(format!(
            "lane width {lane_width} outside [2.5, 4.5]"
        )));
    }
    if !o.confirmed || o.pose.x <= 0.0 {
        return Ok(None);
    }
    let (s, c) = o.pose.theta.sin_cos();
    let normal = Vector3::new(-s, c, 0.0);
    let half = lane_width / 2.0;
    let sd = cfg.driver_lateral_sigma;
    let cov = o.covariance + normal * normal.transpose() * (sd * sd);
    let at = |sign: f64| {
        LaneFeature::new(
            Pose2::new(
                o.pose.x + sign * half * normal.x,
                o.pose.y + sign * half * normal.y,
                o.pose.theta,
            ),
            cfg.object_confidence,
            cov,
        )
    };
    Ok(Some((at(1.0), at(-1.0))))
}

/// Current lane-width estimate and whether it came from the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneWidth {
    pub width: f64,
    pub measured: bool,
}

pub fn current_lane_width(smc: Option<&SmcLaneReport>, cfg: &IngestConfig) -> LaneWidth {
    let fallback = LaneWidth {
        width: cfg.default_lane_width,
        measured: false,
    };
    let Some(r) = smc else { return fallback };
    let (Some(l), Some(rt)) = (&r.left, &r.right) else {
        return fallback;
    };
    let w = l.y0 - rt.y0;
    if w.is_finite() && (cfg.lane_width_min..=cfg.lane_width_max).contains(&w) {
        LaneWidth {
            width: w,
            measured: true,
        }
    } else {
        fallback
    }
}
