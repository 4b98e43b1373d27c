//! Assignment of fused features to lane boundaries and per-boundary offsets.

use super::base::BaseClothoid;
use crate::config::LaneModelConfig;
use crate::feature::LaneFeature;

/// Features sharing one lane boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroup {
    /// Offset (in the sense of [`LaneOffset::offset`]) of the candidate
    /// curve the group was gathered around.
    pub seed_y0: f64,
    /// Tracked lane the group continues, if any.
    pub track: Option<u64>,
    /// Indices into the feature slice.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grouping {
    pub groups: Vec<FeatureGroup>,
    pub ungrouped: Vec<usize>,
}

/// Offset estimate of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneOffset {
    /// Offset of the boundary from the course (normal or lateral, see
    /// `LaneModelConfig::parallel_offsets`).
    pub offset: f64,
    /// Lateral position at x = 0.
    pub y0: f64,
    /// Variance of `y0` from the weighted residual spread.
    pub variance: f64,
    pub support: usize,
    pub track: Option<u64>,
}

/// Assigns `candidates[k]` (offset, track) to each feature within `gate`,
/// nearest first, ties to the smaller `|y0|`. Returns unassigned indices.
fn assign(
    features: &[LaneFeature],
    pool: &[usize],
    base: &BaseClothoid,
    groups: &mut [FeatureGroup],
    gate: f64,
    parallel: bool,
) -> Vec<usize> {
    let mut rest = Vec::new();
    for &i in pool {
        let f = &features[i];
        let off = base.offset_of(f.pose.x, f.pose.y, parallel);
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in groups.iter().enumerate() {
            let d = (off - g.seed_y0).abs();
            let better = match best {
                None => true,
                Some((b, bd)) => {
                    d < bd || (d == bd && g.seed_y0.abs() < groups[b].seed_y0.abs())
                }
            };
            if better {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, d)) if d < gate => groups[k].members.push(i),
            _ => rest.push(i),
        }
    }
    rest
}

/// Partitions the features into boundary groups. Heading outliers of the
/// base fit take part too: they only failed the course fit. Features are
/// first gated to candidates built from the previous offsets and the current
/// course; near-range leftovers are projected to x = 0 along the course and
/// clustered to seed new groups, which then gather any remaining features.
pub fn group_features(
    features: &[LaneFeature],
    base: &BaseClothoid,
    previous: &[(u64, f64)],
    cfg: &LaneModelConfig,
) -> Grouping {
    let gate = cfg.lane_width / 4.0;
    let par = cfg.parallel_offsets;
    let at_origin = if par { base.normal_stretch(0.0) } else { 1.0 };
    let mut groups: Vec<FeatureGroup> = previous
        .iter()
        .map(|&(id, y0)| FeatureGroup {
            seed_y0: y0 / at_origin,
            track: Some(id),
            members: Vec::new(),
        })
        .collect();
    let all: Vec<usize> = (0..features.len()).collect();
    let rest = assign(features, &all, base, &mut groups, gate, par);

    let mut near: Vec<(f64, usize)> = rest
        .iter()
        .filter(|&&i| features[i].pose.x < cfg.cluster_near_range)
        .map(|&i| (base.offset_of(features[i].pose.x, features[i].pose.y, par), i))
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seeds = Vec::new();
    let mut cluster: Vec<f64> = Vec::new();
    let mut flush = |cluster: &mut Vec<f64>| {
        if cluster.len() >= cfg.min_cluster_support {
            seeds.push(cluster.iter().sum::<f64>() / cluster.len() as f64);
        }
        cluster.clear();
    };
    for (off, _) in &near {
        if let Some(&first) = cluster.first() {
            let mean = cluster.iter().sum::<f64>() / cluster.len() as f64;
            if (off - mean).abs() > cfg.cluster_radius || (off - first).abs() > 2.0 * cfg.cluster_radius {
                flush(&mut cluster);
            }
        }
        cluster.push(*off);
    }
    flush(&mut cluster);

    let first_new = groups.len();
    groups.extend(seeds.into_iter().map(|y0| FeatureGroup {
        seed_y0: y0,
        track: None,
        members: Vec::new(),
    }));
    let ungrouped = if groups.len() > first_new {
        assign(features, &rest, base, &mut groups[first_new..], gate, par)
    } else {
        rest
    };
    groups.retain(|g| !g.members.is_empty());
    Grouping { groups, ungrouped }
}

/// Confidence-weighted offset of each group against the course; groups with
/// fewer than the configured minimum of features are dropped.
pub fn fit_lane_offsets(
    features: &[LaneFeature],
    groups: &[FeatureGroup],
    base: &BaseClothoid,
    cfg: &LaneModelConfig,
) -> Vec<LaneOffset> {
    let par = cfg.parallel_offsets;
    let off = |f: &LaneFeature| base.offset_of(f.pose.x, f.pose.y, par);
    let at_origin = if par { base.normal_stretch(0.0) } else { 1.0 };
    groups
        .iter()
        .filter(|g| g.members.len() >= cfg.min_group_size.max(1))
        .filter_map(|g| {
            let mut sw = 0.0;
            let mut swy = 0.0;
            for &i in &g.members {
                let f = &features[i];
                sw += f.confidence;
                swy += f.confidence * off(f);
            }
            if sw <= 0.0 {
                return None;
            }
            let d = swy / sw;
            let n = g.members.len() as f64;
            let mut sw2 = 0.0;
            let mut ss = 0.0;
            for &i in &g.members {
                let f = &features[i];
                let r = off(f) - d;
                ss += f.confidence * r * r;
                sw2 += f.confidence * f.confidence;
            }
            // weighted sample variance over the effective sample size
            let n_eff = sw * sw / sw2;
            let var = if n > 1.0 { ss / sw * n / (n - 1.0) / n_eff } else { 0.0 };
            Some(LaneOffset {
                offset: d,
                y0: d * at_origin,
                variance: var * at_origin * at_origin,
                support: g.members.len(),
                track: g.track,
            })
        })
        .collect()
}
