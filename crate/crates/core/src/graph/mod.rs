//! Sliding-window GraphSLAM graph of ego poses and lane-feature vertices.
//!
//! All vertex poses are kept in the frame of the current ego pose, which is
//! always the origin. Each frame the graph is moved with the odometry, pruned,
//! and then extended with measurement, width and smoothing constraints.

mod dump;
mod edge;

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub use dump::dump_graph;
pub use edge::{
    Edge, EdgeId, EdgeKind, ObjectTag, Side, SwitchId, SwitchVariable, Vertex, VertexId,
    VertexKind,
};
pub(crate) use edge::pose_residual;

use crate::config::GraphConfig;
use crate::feature::LaneFeature;
use crate::geometry::{ControlVector, Pose2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("measurement rejected: {0}")]
    RejectedMeasurement(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(VertexId),
}

/// Input source of a camera measurement edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Smc,
    Hrc,
}

/// Last-step feature vertices contributed by one tracked object.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ObjectTrack {
    left: VertexId,
    right: VertexId,
    frame: u64,
}

#[derive(Debug, Clone)]
pub struct FusionGraph {
    cfg: GraphConfig,
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<EdgeId, Edge>,
    switches: BTreeMap<SwitchId, SwitchVariable>,
    /// Ego poses, oldest first; the back is the current pose.
    poses: VecDeque<VertexId>,
    objects: HashMap<u64, ObjectTrack>,
    frame: u64,
    next_vertex: u64,
    next_edge: u64,
    next_switch: u64,
}

impl FusionGraph {
    /// A graph holding only the current ego pose at the origin.
    pub fn new(cfg: GraphConfig) -> Self {
        let mut g = Self {
            cfg,
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            switches: BTreeMap::new(),
            poses: VecDeque::new(),
            objects: HashMap::new(),
            frame: 0,
            next_vertex: 0,
            next_edge: 0,
            next_switch: 0,
        };
        let id = g.insert_vertex(VertexKind::EgoPose, Pose2::IDENTITY, 1.0, Matrix3::zeros());
        g.poses.push_back(id);
        g
    }

    pub fn config(&self) -> &GraphConfig {
        &self.cfg
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn current_pose(&self) -> VertexId {
        *self.poses.back().expect("graph always holds the current pose")
    }

    pub fn pose_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.poses.iter().copied()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn feature_vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices
            .values()
            .filter(|v| v.kind == VertexKind::Feature)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn switches(&self) -> impl Iterator<Item = &SwitchVariable> {
        self.switches.values()
    }

    pub fn switch(&self, id: SwitchId) -> Option<&SwitchVariable> {
        self.switches.get(&id)
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        if kind == EdgeKind::SwitchPrior {
            return self.switches.len();
        }
        self.edges.values().filter(|e| e.kind == kind).count()
    }

    pub fn set_vertex_pose(&mut self, id: VertexId, pose: Pose2) {
        if let Some(v) = self.vertices.get_mut(&id) {
            v.pose = pose;
        }
    }

    pub fn set_vertex_covariance(&mut self, id: VertexId, cov: Matrix3<f64>) {
        if let Some(v) = self.vertices.get_mut(&id) {
            v.covariance = cov;
        }
    }

    /// Stores a switch value, clamped to `[0, 1]`.
    pub fn set_switch_value(&mut self, id: SwitchId, value: f64) {
        if let Some(s) = self.switches.get_mut(&id) {
            s.value = value.clamp(0.0, 1.0);
        }
    }

    fn insert_vertex(
        &mut self,
        kind: VertexKind,
        pose: Pose2,
        confidence: f64,
        covariance: Matrix3<f64>,
    ) -> VertexId {
        let id = VertexId(self.next_vertex);
        self.next_vertex += 1;
        self.vertices.insert(
            id,
            Vertex {
                id,
                kind,
                pose,
                confidence,
                covariance,
                created: self.frame,
            },
        );
        id
    }

    fn insert_edge(
        &mut self,
        kind: EdgeKind,
        from: VertexId,
        to: VertexId,
        measurement: Pose2,
        information: Matrix3<f64>,
        object: Option<ObjectTag>,
    ) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        let switch = if kind == EdgeKind::Smoothing {
            let sid = SwitchId(self.next_switch);
            self.next_switch += 1;
            self.switches.insert(
                sid,
                SwitchVariable {
                    id: sid,
                    value: 1.0,
                    prior_information: self.cfg.switch_prior,
                    edge: id,
                },
            );
            Some(sid)
        } else {
            None
        };
        self.edges.insert(
            id,
            Edge {
                id,
                kind,
                from,
                to,
                measurement,
                information,
                switch,
                object,
                frame: self.frame,
            },
        );
        id
    }

    fn remove_edge(&mut self, id: EdgeId) {
        if let Some(e) = self.edges.remove(&id) {
            if let Some(s) = e.switch {
                self.switches.remove(&s);
            }
        }
    }

    /// Removes vertices and every edge touching them.
    fn remove_vertices(&mut self, doomed: &[VertexId]) {
        if doomed.is_empty() {
            return;
        }
        let set: std::collections::HashSet<VertexId> = doomed.iter().copied().collect();
        let dead: Vec<EdgeId> = self
            .edges
            .values()
            .filter(|e| set.contains(&e.from) || set.contains(&e.to))
            .map(|e| e.id)
            .collect();
        for e in dead {
            self.remove_edge(e);
        }
        for v in doomed {
            self.vertices.remove(v);
        }
        self.poses.retain(|p| !set.contains(p));
    }

    /// Moves the graph into the next ego frame and adds the odometry edge.
    pub fn advance_odometry(&mut self, u: &ControlVector) {
        let delta = u.motion_delta();
        self.frame += 1;
        let (s, c) = delta.theta.sin_cos();
        let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        for v in self.vertices.values_mut() {
            v.pose = delta.between(&v.pose);
            if v.kind == VertexKind::Feature {
                v.covariance = rot.transpose() * v.covariance * rot;
            }
        }

        let behind: Vec<VertexId> = self
            .feature_vertices()
            .filter(|v| v.pose.x < -self.cfg.prune_behind)
            .map(|v| v.id)
            .collect();
        self.remove_vertices(&behind);

        let prev = self.current_pose();
        let cur = self.insert_vertex(VertexKind::EgoPose, Pose2::IDENTITY, 1.0, Matrix3::zeros());
        self.poses.push_back(cur);
        let dist = delta.x.hypot(delta.y);
        let sxy = self.cfg.odo_trans_rel * dist + self.cfg.odo_trans_abs;
        let sth = self.cfg.odo_rot_rel * delta.theta.abs() + self.cfg.odo_rot_abs;
        let info = Matrix3::from_diagonal(&Vector3::new(
            1.0 / (sxy * sxy),
            1.0 / (sxy * sxy),
            1.0 / (sth * sth),
        ));
        self.insert_edge(EdgeKind::Odometry, prev, cur, delta, info, None);

        while self.poses.len() > self.cfg.window + 1 {
            let oldest = self.poses[0];
            self.remove_vertices(&[oldest]);
        }
        self.remove_unmeasured_features();
        self.remove_orphan_poses(prev);
        let frame = self.frame;
        let vertices = &self.vertices;
        self.objects.retain(|_, t| {
            t.frame + 1 >= frame && vertices.contains_key(&t.left) && vertices.contains_key(&t.right)
        });
    }

    /// Features that lost every measurement edge carry no position information.
    fn remove_unmeasured_features(&mut self) {
        let mut measured = std::collections::HashSet::new();
        for e in self.edges.values().filter(|e| e.kind.is_measurement()) {
            measured.insert(e.to);
        }
        let doomed: Vec<VertexId> = self
            .feature_vertices()
            .filter(|v| !measured.contains(&v.id))
            .map(|v| v.id)
            .collect();
        self.remove_vertices(&doomed);
    }

    /// Drops past poses without measurement edges. `keep` (the pose just left)
    /// survives one step so the new odometry edge has an anchor. A removed pose
    /// between two odometry edges is bridged by their composition.
    fn remove_orphan_poses(&mut self, keep: VertexId) {
        let cur = self.current_pose();
        loop {
            let mut has_meas = std::collections::HashSet::new();
            for e in self.edges.values().filter(|e| e.kind.is_measurement()) {
                has_meas.insert(e.from);
            }
            let Some(&orphan) = self
                .poses
                .iter()
                .find(|p| **p != cur && **p != keep && !has_meas.contains(p))
            else {
                break;
            };
            let incoming = self
                .edges
                .values()
                .find(|e| e.kind == EdgeKind::Odometry && e.to == orphan)
                .cloned();
            let outgoing = self
                .edges
                .values()
                .find(|e| e.kind == EdgeKind::Odometry && e.from == orphan)
                .cloned();
            self.remove_vertices(&[orphan]);
            if let (Some(a), Some(b)) = (incoming, outgoing) {
                let z = a.measurement.compose(&b.measurement);
                let (s, c) = a.measurement.theta.sin_cos();
                let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
                let cov_a = a.information.try_inverse().unwrap_or_else(Matrix3::identity);
                let cov_b = b.information.try_inverse().unwrap_or_else(Matrix3::identity);
                let cov = cov_a + rot * cov_b * rot.transpose();
                let info = cov.try_inverse().unwrap_or_else(Matrix3::identity);
                self.insert_edge(EdgeKind::Odometry, a.from, b.to, z, (info + info.transpose()) * 0.5, None);
            }
        }
    }

    /// Nearest feature vertex passing the Euclidean, heading and Mahalanobis gates.
    pub fn associate(&self, f: &LaneFeature) -> Option<VertexId> {
        let max_d = self.cfg.assoc_max_distance;
        let max_dt = self.cfg.assoc_max_heading_deg.to_radians();
        let mut best: Option<(f64, VertexId)> = None;
        for v in self.feature_vertices() {
            let dx = f.pose.x - v.pose.x;
            if dx.abs() >= max_d {
                continue;
            }
            let dy = f.pose.y - v.pose.y;
            if dx.hypot(dy) >= max_d {
                continue;
            }
            let dt = crate::geometry::wrap(f.pose.theta - v.pose.theta);
            if dt.abs() >= max_dt {
                continue;
            }
            let Some(inv) = (v.covariance + f.covariance).try_inverse() else {
                continue;
            };
            let e = Vector3::new(dx, dy, dt);
            let d2 = e.dot(&(inv * e));
            if !(d2 < self.cfg.assoc_chi2) {
                continue;
            }
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, v.id));
            }
        }
        best.map(|(_, id)| id)
    }

    fn associate_or_insert(&mut self, f: &LaneFeature, ego: VertexId) -> VertexId {
        match self.associate(f) {
            Some(id) => {
                let v = self.vertices.get_mut(&id).expect("associated vertex exists");
                v.confidence = 1.0 - (1.0 - v.confidence) * (1.0 - f.confidence);
                id
            }
            None => {
                let ego_pose = self.vertices[&ego].pose;
                let (s, c) = ego_pose.theta.sin_cos();
                let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
                self.insert_vertex(
                    VertexKind::Feature,
                    ego_pose.compose(&f.pose),
                    f.confidence,
                    rot * f.covariance * rot.transpose(),
                )
            }
        }
    }

    fn check_ego(&self, ego: VertexId) -> Result<(), GraphError> {
        match self.vertices.get(&ego) {
            Some(v) if v.kind == VertexKind::EgoPose => Ok(()),
            _ => Err(GraphError::UnknownVertex(ego)),
        }
    }

    /// Adds a camera feature measured from `ego`: associates it with an
    /// existing vertex or creates one, then links it by a measurement edge.
    pub fn add_measurement(
        &mut self,
        source: Source,
        f: &LaneFeature,
        ego: VertexId,
    ) -> Result<VertexId, GraphError> {
        self.check_ego(ego)?;
        f.validate()
            .map_err(|e| GraphError::RejectedMeasurement(e.to_string()))?;
        let info = f
            .information()
            .map_err(|e| GraphError::RejectedMeasurement(e.to_string()))?;
        let id = self.associate_or_insert(f, ego);
        let kind = match source {
            Source::Smc => EdgeKind::SmcMeas,
            Source::Hrc => EdgeKind::HrcMeas,
        };
        self.insert_edge(kind, ego, id, f.pose, info, None);
        Ok(id)
    }

    /// Adds the left/right pseudo-features of a tracked object together with
    /// the lane-width constraint and, when the object also contributed at the
    /// previous step, switchable smoothing constraints to its earlier features.
    #[allow(clippy::too_many_arguments)]
    pub fn add_object_measurement(
        &mut self,
        obj_id: u64,
        left: &LaneFeature,
        right: &LaneFeature,
        width: f64,
        width_measured: bool,
        ego: VertexId,
    ) -> Result<(VertexId, VertexId), GraphError> {
        self.check_ego(ego)?;
        let info_l = left
            .information()
            .map_err(|e| GraphError::RejectedMeasurement(e.to_string()))?;
        let info_r = right
            .information()
            .map_err(|e| GraphError::RejectedMeasurement(e.to_string()))?;
        let tag = |side| Some(ObjectTag {
            object: obj_id,
            side,
        });
        let l = self.associate_or_insert(left, ego);
        let r = self.associate_or_insert(right, ego);
        self.insert_edge(EdgeKind::ObjMeas, ego, l, left.pose, info_l, tag(Some(Side::Left)));
        self.insert_edge(EdgeKind::ObjMeas, ego, r, right.pose, info_r, tag(Some(Side::Right)));

        if l != r {
            let sw = if width_measured {
                self.cfg.width_sigma_measured
            } else {
                self.cfg.width_sigma_default
            };
            let st = self.cfg.width_sigma_theta;
            let info = Matrix3::from_diagonal(&Vector3::new(0.0, 1.0 / (sw * sw), 1.0 / (st * st)));
            self.insert_edge(EdgeKind::Width, r, l, Pose2::new(0.0, width, 0.0), info, tag(None));
        }

        if let Some(prev) = self.objects.get(&obj_id).copied() {
            if prev.frame + 1 == self.frame {
                let sy = self.cfg.smoothing_sigma_y;
                let st = self.cfg.smoothing_sigma_theta;
                let info =
                    Matrix3::from_diagonal(&Vector3::new(0.0, 1.0 / (sy * sy), 1.0 / (st * st)));
                for (side, a, b) in [(Side::Left, prev.left, l), (Side::Right, prev.right, r)] {
                    if a != b && self.vertices.contains_key(&a) {
                        self.insert_edge(EdgeKind::Smoothing, a, b, Pose2::IDENTITY, info, tag(Some(side)));
                    }
                }
            }
        }
        self.objects.insert(
            obj_id,
            ObjectTrack {
                left: l,
                right: r,
                frame: self.frame,
            },
        );
        Ok((l, r))
    }

    /// Total cost `J(V)`: every edge's `e^T Omega e` (smoothing residuals
    /// scaled by their switch) plus the switch priors.
    pub fn objective(&self) -> f64 {
        let mut j = 0.0;
        for e in self.edges.values() {
            let a = &self.vertices[&e.from].pose;
            let b = &self.vertices[&e.to].pose;
            let s = e.switch.map(|s| self.switches[&s].value);
            j += e.cost(a, b, s);
        }
        j + self.switches.values().map(|s| s.prior_cost()).sum::<f64>()
    }

    /// Fixed measurement edge from the current pose, bypassing association.
    /// Used to build graphs with a prescribed structure.
    pub fn add_raw_edge(
        &mut self,
        kind: EdgeKind,
        from: VertexId,
        to: VertexId,
        measurement: Pose2,
        information: Matrix3<f64>,
    ) -> Result<EdgeId, GraphError> {
        for v in [from, to] {
            if !self.vertices.contains_key(&v) {
                return Err(GraphError::UnknownVertex(v));
            }
        }
        Ok(self.insert_edge(kind, from, to, measurement, information, None))
    }

    /// Inserts a feature vertex directly (no association).
    pub fn add_raw_feature(&mut self, pose: Pose2, confidence: f64) -> VertexId {
        self.insert_vertex(VertexKind::Feature, pose, confidence, Matrix3::identity())
    }

    /// Inserts a past ego pose directly, placed before the current pose.
    pub fn add_raw_pose(&mut self, pose: Pose2) -> VertexId {
        let id = self.insert_vertex(VertexKind::EgoPose, pose, 1.0, Matrix3::zeros());
        let cur = self.poses.pop_back().expect("current pose");
        self.poses.push_back(id);
        self.poses.push_back(cur);
        id
    }
}

pub fn graph_objective(g: &FusionGraph) -> f64 {
    g.objective()
}

#[cfg(test)]
mod tests;
