use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SwitchId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    EgoPose,
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Odometry,
    SmcMeas,
    HrcMeas,
    ObjMeas,
    Width,
    Smoothing,
    /// Unary `(1 - s)^2` term; carried by the switch variable itself.
    SwitchPrior,
}

impl EdgeKind {
    pub fn is_measurement(self) -> bool {
        matches!(self, EdgeKind::SmcMeas | EdgeKind::HrcMeas | EdgeKind::ObjMeas)
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Odometry => "odometry",
            EdgeKind::SmcMeas => "smc_meas",
            EdgeKind::HrcMeas => "hrc_meas",
            EdgeKind::ObjMeas => "obj_meas",
            EdgeKind::Width => "width",
            EdgeKind::Smoothing => "smoothing",
            EdgeKind::SwitchPrior => "switch_prior",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Which tracked object (and which side of it) produced an object edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectTag {
    pub object: u64,
    pub side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    pub pose: Pose2,
    /// Feature confidence; 1 for ego poses.
    pub confidence: f64,
    /// Current uncertainty estimate in the ego frame (features only).
    pub covariance: Matrix3<f64>,
    /// Frame at which the vertex was created.
    pub created: u64,
}

/// A binary constraint `e = z - between(v_from, v_to)`, scaled by the switch
/// value for smoothing edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub kind: EdgeKind,
    pub from: VertexId,
    pub to: VertexId,
    pub measurement: Pose2,
    pub information: Matrix3<f64>,
    pub switch: Option<SwitchId>,
    pub object: Option<ObjectTag>,
    /// Frame at which the edge was inserted.
    pub frame: u64,
}

impl Edge {
    /// Unscaled discrepancy between the measurement and the vertex pose difference.
    pub fn raw_residual(&self, from: &Pose2, to: &Pose2) -> Vector3<f64> {
        pose_residual(&self.measurement, from, to)
    }

    /// Residual entering the objective; `switch` is the value of this edge's
    /// switch variable, if it has one.
    pub fn residual(&self, from: &Pose2, to: &Pose2, switch: Option<f64>) -> Vector3<f64> {
        let e = self.raw_residual(from, to);
        match switch {
            Some(s) => e * s,
            None => e,
        }
    }

    pub fn cost(&self, from: &Pose2, to: &Pose2, switch: Option<f64>) -> f64 {
        let e = self.residual(from, to, switch);
        e.dot(&(self.information * e))
    }
}

pub(crate) fn pose_residual(z: &Pose2, from: &Pose2, to: &Pose2) -> Vector3<f64> {
    let zhat = from.between(to);
    Vector3::new(z.x - zhat.x, z.y - zhat.y, wrap(z.theta - zhat.theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchVariable {
    pub id: SwitchId,
    pub value: f64,
    pub prior_information: f64,
    /// The smoothing edge this switch scales.
    pub edge: EdgeId,
}

impl SwitchVariable {
    pub fn prior_cost(&self) -> f64 {
        let r = 1.0 - self.value;
        self.prior_information * r * r
    }
}
