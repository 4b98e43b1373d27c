//! Piecewise-clothoid road centre line in a flat global frame.

use serde::{Deserialize, Serialize};

/// Curvature `c0 + c1 * s` over `length` metres of arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSegment {
    pub length: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
}

const NODE_SPACING: f64 = 2.0;

// 5-point Gauss-Legendre rule on [-1, 1]
const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Centre line starting at the origin with heading 0. Positions are the
/// integral of `(cos psi, sin psi)` over arc length, tabulated every 2 m and
/// completed by Gauss-Legendre quadrature. Beyond the last segment the road
/// continues with that segment's curvature law.
#[derive(Debug, Clone)]
pub struct RoadCourse {
    segments: Vec<RoadSegment>,
    starts: Vec<f64>,
    start_heading: Vec<f64>,
    nodes: Vec<(f64, f64)>,
}

impl RoadCourse {
    pub fn new(segments: &[RoadSegment], min_length: f64) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let mut start_heading = Vec::with_capacity(segments.len());
        let (mut s, mut psi) = (0.0, 0.0);
        for seg in segments {
            starts.push(s);
            start_heading.push(psi);
            psi += seg.c0 * seg.length + seg.c1 * seg.length * seg.length / 2.0;
            s += seg.length;
        }
        let mut road = Self {
            segments: segments.to_vec(),
            starts,
            start_heading,
            nodes: vec![(0.0, 0.0)],
        };
        let end = s.max(min_length) + 4.0 * NODE_SPACING;
        let n = (end / NODE_SPACING).ceil() as usize;
        let mut p = (0.0, 0.0);
        for k in 0..n {
            let a = k as f64 * NODE_SPACING;
            let d = road.integrate(a, a + NODE_SPACING);
            p = (p.0 + d.0, p.1 + d.1);
            road.nodes.push(p);
        }
        road
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Extent of the tabulated course.
    pub fn max_arc(&self) -> f64 {
        (self.nodes.len() - 1) as f64 * NODE_SPACING
    }

    fn segment(&self, s: f64) -> usize {
        match self.starts.iter().rposition(|&st| st <= s) {
            Some(i) => i,
            None => 0,
        }
    }

    pub fn curvature(&self, s: f64) -> f64 {
        if self.segments.is_empty() {
            return 0.0;
        }
        let i = self.segment(s);
        let u = s - self.starts[i];
        self.segments[i].c0 + self.segments[i].c1 * u
    }

    pub fn heading(&self, s: f64) -> f64 {
        if self.segments.is_empty() {
            return 0.0;
        }
        let i = self.segment(s);
        let u = s - self.starts[i];
        let g = &self.segments[i];
        self.start_heading[i] + g.c0 * u + g.c1 * u * u / 2.0
    }

    /// `integral_a^b (cos psi, sin psi) ds`, split at segment boundaries.
    fn integrate(&self, a: f64, b: f64) -> (f64, f64) {
        let mut cuts = vec![a];
        cuts.extend(self.starts.iter().copied().filter(|&st| st > a && st < b));
        cuts.push(b);
        let mut acc = (0.0, 0.0);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = (hi - lo) / 2.0;
            let mid = (hi + lo) / 2.0;
            for (x, wt) in GL_X.iter().zip(GL_W) {
                let psi = self.heading(mid + half * x);
                acc.0 += wt * half * psi.cos();
                acc.1 += wt * half * psi.sin();
            }
        }
        acc
    }

    /// Centre-line point at arc length `s` (`s >= 0`).
    pub fn point(&self, s: f64) -> (f64, f64) {
        let s = s.max(0.0);
        let k = ((s / NODE_SPACING).floor() as usize).min(self.nodes.len() - 1);
        let base = self.nodes[k];
        let d = self.integrate(k as f64 * NODE_SPACING, s);
        (base.0 + d.0, base.1 + d.1)
    }

    /// Point at lateral offset `d` (positive to the left) from the centre line.
    pub fn offset_point(&self, s: f64, d: f64) -> (f64, f64) {
        let (x, y) = self.point(s);
        let (sn, cs) = self.heading(s).sin_cos();
        (x - d * sn, y + d * cs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_and_circular_courses() {
        let r = RoadCourse::new(&[RoadSegment { length: 500.0, c0: 0.0, c1: 0.0 }], 500.0);
        let (x, y) = r.point(123.4);
        assert!((x - 123.4).abs() < 1e-12 && y.abs() < 1e-12);
        let k = 1e-3;
        let r = RoadCourse::new(&[RoadSegment { length: 3000.0, c0: k, c1: 0.0 }], 3000.0);
        for s in [0.0, 17.3, 250.0, 1999.9] {
            let (x, y) = r.point(s);
            let expect = ((k * s).sin() / k, (1.0 - (k * s).cos()) / k);
            assert!((x - expect.0).abs() < 1e-9 && (y - expect.1).abs() < 1e-9, "s={s}");
            // offset curves of a circle are concentric circles
            let (ox, oy) = r.offset_point(s, 1.75);
            let rad = (ox * ox + (oy - 1.0 / k).powi(2)).sqrt();
            assert!((rad - (1.0 / k - 1.75)).abs() < 1e-9);
        }
    }

    #[test]
    fn clothoid_segment_heading_and_continuity() {
        let segs = [
            RoadSegment { length: 100.0, c0: 0.0, c1: 0.0 },
            RoadSegment { length: 200.0, c0: 0.0, c1: 2e-6 },
            RoadSegment { length: 100.0, c0: 4e-4, c1: 0.0 },
        ];
        let r = RoadCourse::new(&segs, 400.0);
        assert!((r.heading(300.0) - 2e-6 * 200.0 * 200.0 / 2.0).abs() < 1e-15);
        assert!((r.curvature(250.0) - 3e-4).abs() < 1e-15);
        // finite-difference of position follows the heading
        for s in [50.0, 150.0, 299.0, 350.0] {
            let h = 1e-4;
            let (x1, y1) = r.point(s - h);
            let (x2, y2) = r.point(s + h);
            let psi = (y2 - y1).atan2(x2 - x1);
            assert!((psi - r.heading(s)).abs() < 1e-8);
            assert!(((x2 - x1).hypot(y2 - y1) - 2.0 * h).abs() < 1e-10);
        }
    }
}
