//! Line-oriented text dump of a graph, one record per line:
//!
//! ```text
//! # lanefusion-graph v1 frame=<n>
//! V <id> <ego_pose|feature> <x> <y> <theta> <confidence>
//! E <id> <kind> <from> <to> <zx> <zy> <ztheta> <o11> <o12> <o13> <o22> <o23> <o33> [switch=<id>]
//! S <id> <edge> <value> <prior_information>
//! ```
//!
//! `o..` is the upper triangle of the information matrix, row major.

use std::fmt::Write;

use super::{FusionGraph, VertexKind};

pub fn dump_graph(g: &FusionGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# lanefusion-graph v1 frame={}", g.frame());
    for v in g.vertices() {
        let kind = match v.kind {
            VertexKind::EgoPose => "ego_pose",
            VertexKind::Feature => "feature",
        };
        let _ = writeln!(
            out,
            "V {} {} {:.6} {:.6} {:.6} {:.4}",
            v.id.0, kind, v.pose.x, v.pose.y, v.pose.theta, v.confidence
        );
    }
    for e in g.edges() {
        let o = &e.information;
        let _ = write!(
            out,
            "E {} {} {} {} {:.6} {:.6} {:.6} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e}",
            e.id.0,
            e.kind.name(),
            e.from.0,
            e.to.0,
            e.measurement.x,
            e.measurement.y,
            e.measurement.theta,
            o[(0, 0)],
            o[(0, 1)],
            o[(0, 2)],
            o[(1, 1)],
            o[(1, 2)],
            o[(2, 2)],
        );
        if let Some(s) = e.switch {
            let _ = write!(out, " switch={}", s.0);
        }
        out.push('\n');
    }
    for s in g.switches() {
        let _ = writeln!(
            out,
            "S {} {} {:.6} {:.6}",
            s.id.0, s.edge.0, s.value, s.prior_information
        );
    }
    out
}
