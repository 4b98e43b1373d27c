use proptest::prelude::*;

use super::*;
use crate::geometry::Pose2;
use crate::simulator::{ground_truth_local, GroundTruthMap, RoadSegment, ScenarioConfig};

fn straight_truth() -> (GroundTruthMap, LocalTruth) {
    let cfg = ScenarioConfig {
        duration: 1.0,
        road: vec![RoadSegment { length: 1000.0, c0: 0.0, c1: 0.0 }],
        noise: crate::simulator::NoiseConfig::zero(),
        ..ScenarioConfig::default()
    };
    let (map, _) = crate::simulator::generate(&cfg).unwrap();
    let local = ground_truth_local(&map, &Pose2::new(100.0, 0.0, 0.0));
    (map, local)
}

fn lane(y0: f64, c0: f64) -> Clothoid {
    Clothoid::new(y0, 0.0, c0, 0.0, 0.0, 120.0).unwrap()
}

#[test]
fn boundary_classes_around_the_ego_lane() {
    let (_, local) = straight_truth();
    // boundaries at -5.25, -1.75, 1.75, 5.25
    assert_eq!(
        classify_boundaries(&local),
        vec![LaneClass::Adjacent, LaneClass::Ego, LaneClass::Ego, LaneClass::Adjacent]
    );
}

#[test]
fn perfect_shifted_and_curved_estimates() {
    let (_, local) = straight_truth();
    let perfect: Vec<_> = [-5.25, -1.75, 1.75, 5.25].iter().map(|&y| lane(y, 0.0)).collect();
    let d = frame_deviations(&perfect, &local);
    assert_eq!(d.samples.len(), 4 * 13);
    assert!(d.samples.iter().all(|s| s.value.abs() < 1e-12));

    let d = frame_deviations(&[lane(1.95, 0.0)], &local);
    assert!(d.samples.iter().all(|s| (s.value - 0.2).abs() < 1e-12));
    assert!(d.samples.iter().all(|s| s.class == LaneClass::Ego && s.boundary == 2));

    let d = frame_deviations(&[lane(1.75, 1e-4)], &local);
    let at120 = d.samples.iter().find(|s| s.sample == 12).unwrap();
    assert!((at120.value - 0.72).abs() < 1e-9);
}

#[test]
fn far_estimates_are_unmatched() {
    let (_, local) = straight_truth();
    let d = frame_deviations(&[lane(3.0, 0.0), lane(9.0, 0.0)], &local);
    assert_eq!(d.unmatched, 1);
    assert_eq!(d.matches, vec![Some(2), None]);
    assert_eq!(d.samples.len(), 13);
}

#[test]
fn matching_is_order_independent() {
    let (_, local) = straight_truth();
    let a = [lane(1.6, 1e-5), lane(-1.9, 0.0), lane(5.0, -2e-5)];
    let b = [a[2], a[0], a[1]];
    let mut da = frame_deviations(&a, &local).samples;
    let mut db = frame_deviations(&b, &local).samples;
    let key = |s: &Deviation| (s.boundary, s.sample);
    da.sort_by_key(key);
    db.sort_by_key(key);
    assert_eq!(da, db);
}

#[test]
fn accumulation_examples() {
    let (_, local) = straight_truth();
    let f1 = frame_deviations(&[lane(1.95, 0.0)], &local);
    let mut single = DeviationTable::default();
    single.add_frame(&f1);
    assert_eq!(single.ego[0].n, 1);
    assert!((single.ego[0].mean - 0.2).abs() < 1e-12 && single.ego[0].sigma() < 1e-12);

    let f2 = frame_deviations(&[lane(1.55, 0.0)], &local);
    let mut t = DeviationTable::default();
    t.add_frame(&f1);
    t.add_frame(&f2);
    assert!(t.ego[5].mean.abs() < 1e-12);
    assert!((t.ego[5].rmse() - 0.2).abs() < 1e-12);
}

#[test]
fn csv_layout_is_stable() {
    let t = DeviationTable::default();
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("distance,class,n,mean,sigma,rmse"));
    assert_eq!(lines.next(), Some("0,ego,0,0.000000,0.000000,0.000000"));
    assert_eq!(csv.lines().count(), 1 + 3 * 13);
}

proptest! {
    #[test]
    fn streaming_matches_two_pass(xs in prop::collection::vec(-3.0f64..3.0, 1..200), split in 0usize..200) {
        let mut all = Moments::default();
        for &x in &xs {
            all.push(x);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((all.mean - mean).abs() < 1e-12);
        prop_assert!((all.sigma() - var.sqrt()).abs() < 1e-12);
        let rms = (xs.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        prop_assert!((all.rmse() - rms).abs() < 1e-12);
        prop_assert!(all.rmse() + 1e-15 >= all.mean.abs());

        let k = split.min(xs.len());
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..k].iter().for_each(|&x| a.push(x));
        xs[k..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        prop_assert_eq!(a.n, all.n);
        prop_assert!((a.mean - all.mean).abs() < 1e-12);
        prop_assert!((a.m2 - all.m2).abs() < 1e-9);
    }
}

#[test]
fn runtime_is_positive_for_an_empty_frame() {
    let mut p = crate::pipeline::Pipeline::new(crate::config::PipelineConfig::default());
    let frame = crate::simulator::SensorFrame {
        timestamp: 0.0,
        control: crate::geometry::ControlVector { yaw_rate: 0.0, speed: 0.0, dt: 0.1 },
        smc: None,
        hrc: None,
        objects: Vec::new(),
    };
    let (_, d) = measure_frame_runtime(&mut p, &frame).unwrap();
    assert!(d > std::time::Duration::ZERO);
    let s = RuntimeStats::from_durations(&[d, d * 3, d * 2]);
    assert_eq!(s.frames, 3);
    assert!((s.median_ms - 2.0 * d.as_secs_f64() * 1e3).abs() < 1e-9);
}

fn sw(edge: u64, object: u64, side: Option<Side>, created: f64, value: f64) -> SwitchRecord {
    SwitchRecord {
        edge: crate::graph::EdgeId(edge),
        object,
        side,
        created,
        value,
    }
}

#[test]
fn switch_summary_picks_crossing_edges_and_steady_share() {
    let changes = [LaneChangeRecord {
        object_id: 7,
        start: 10.0,
        end: 13.0,
        from_lane: 0,
        to_lane: 1,
    }];
    let (l, r) = (Some(Side::Left), Some(Side::Right));
    let mut s = vec![
        sw(1, 7, l, 11.4, 0.95),
        sw(2, 7, l, 11.6, 0.2),
        sw(3, 7, l, 11.5, 0.3),
        sw(4, 7, r, 11.5, 0.4),
        // outside the window: steady
        sw(5, 7, l, 9.9, 0.95),
        sw(6, 7, r, 13.1, 0.5),
        // another object at the same time: steady
        sw(7, 8, l, 11.5, 1.0),
    ];
    let sum = summarize_switches(&changes, &s);
    assert_eq!(sum.maneuver.len(), 2);
    assert_eq!(sum.unobserved, 0);
    let left = sum.maneuver.iter().find(|m| m.side == l).unwrap();
    assert_eq!((left.created, left.value, left.crossing), (11.5, 0.3, 11.5));
    assert_eq!(sum.maneuver.iter().find(|m| m.side == r).unwrap().value, 0.4);
    assert_eq!((sum.steady, sum.steady_active), (3, 2));
    assert!((sum.steady_active_fraction() - 2.0 / 3.0).abs() < 1e-15);

    // nothing recorded after the crossing
    s.retain(|x| x.created < 11.5 || x.object == 8);
    let sum = summarize_switches(&changes, &s);
    assert_eq!((sum.maneuver.len(), sum.unobserved), (0, 2));
}

#[test]
fn switch_summary_without_edges_is_vacuous() {
    let sum = summarize_switches(&[], &[]);
    assert_eq!(sum.steady_active_fraction(), 1.0);
    assert!(sum.maneuver.is_empty());
}
