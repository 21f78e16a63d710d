mod common;

use std::collections::HashSet;

use common::qtsi_oracle;
use fishtrack_core::geometry::{iou, BoundingBox};
use fishtrack_core::qtsi::{
    qtsi_merge, DecisionSource, PayloadHandle, QtsiConfig, Query, QueryRef,
};
use fishtrack_core::TrackId;
use proptest::prelude::*;

/// Boxes on a coarse grid so that IOU ties and overlaps both occur.
fn grid_box() -> impl Strategy<Value = BoundingBox> {
    (0u8..6, 0u8..3, 2u8..5, 2u8..5).prop_map(|(x, y, w, h)| {
        BoundingBox::new(
            x as f64 * 2.0,
            y as f64 * 2.0,
            w as f64 * 3.0,
            h as f64 * 3.0,
        )
        .unwrap()
    })
}

#[derive(Debug, Clone)]
struct Instance {
    detect: Vec<Query>,
    track: Vec<Query>,
    real: Vec<BoundingBox>,
    new: Vec<Query>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (
        proptest::collection::vec(grid_box(), 0..=6),
        proptest::collection::vec(grid_box(), 0..=6),
        proptest::collection::vec(grid_box(), 0..=6),
        proptest::collection::vec(grid_box(), 0..=2),
    )
        .prop_map(|(d, t, real, n)| Instance {
            detect: d
                .into_iter()
                .enumerate()
                .map(|(i, b)| Query::detect(b, 0.9).with_payload(PayloadHandle(i as u64)))
                .collect(),
            track: t
                .into_iter()
                .enumerate()
                .map(|(i, b)| Query::track(b, TrackId(i as u64 + 1), 0.8))
                .collect(),
            real,
            new: n
                .into_iter()
                .enumerate()
                .map(|(i, b)| Query::track(b, TrackId(100 + i as u64), 0.7))
                .collect(),
        })
}

fn carried(out: &fishtrack_core::qtsi::QtsiOutcome) -> HashSet<QueryRef> {
    out.merged
        .iter()
        .map(|m| m.origin)
        .filter(|o| !matches!(o, QueryRef::NewMatch(_)))
        .collect()
}

proptest! {
    #[test]
    fn agrees_with_sorted_greedy_oracle(
        inst in instance(),
        threshold in prop_oneof![Just(0.1), Just(0.3), Just(0.5), Just(0.7), 0.0..1.0f64],
        margin in prop_oneof![Just(0.0), 0.0..0.2f64],
    ) {
        let cfg = QtsiConfig { iou_threshold: threshold, tie_margin: margin };
        let out = qtsi_merge(&inst.detect, &inst.track, &inst.real, &inst.new, &cfg).unwrap();
        let expected = qtsi_oracle(&inst.detect, &inst.track, &inst.real, threshold, margin);
        let got: Vec<Option<QueryRef>> = out.decisions.iter().map(|d| d.winner).collect();
        prop_assert_eq!(got, expected);
        for d in &out.decisions {
            if d.source != DecisionSource::Unmatched {
                prop_assert!(d.iou > threshold);
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_carried_queries(inst in instance()) {
        let sweep = [0.1, 0.3, 0.5, 0.7, 0.9];
        let sets: Vec<HashSet<QueryRef>> = sweep
            .iter()
            .map(|&t| {
                let cfg = QtsiConfig { iou_threshold: t, tie_margin: 0.0 };
                carried(&qtsi_merge(&inst.detect, &inst.track, &inst.real, &inst.new, &cfg).unwrap())
            })
            .collect();
        for pair in sets.windows(2) {
            prop_assert!(pair[1].len() <= pair[0].len());
        }
    }

    #[test]
    fn union_and_no_duplicates(inst in instance()) {
        let out = qtsi_merge(&inst.detect, &inst.track, &inst.real, &inst.new, &QtsiConfig::default()).unwrap();
        for q in &inst.new {
            prop_assert!(out.merged.iter().any(|m| &m.query == q));
        }
        let origins: HashSet<QueryRef> = out.merged.iter().map(|m| m.origin).collect();
        prop_assert_eq!(origins.len(), out.merged.len());
    }

    #[test]
    fn detect_dominance(inst in instance()) {
        let cfg = QtsiConfig::default();
        let out = qtsi_merge(&inst.detect, &inst.track, &inst.real, &inst.new, &cfg).unwrap();
        for d in &out.decisions {
            let r = &inst.real[d.real_index];
            let det: Vec<f64> = inst.detect.iter().map(|q| iou(r, &q.bbox)).collect();
            let trk: Vec<f64> = inst.track.iter().map(|q| iou(r, &q.bbox)).collect();
            let dominated = !det.is_empty()
                && det.iter().all(|dv| trk.iter().all(|tv| dv > tv));
            if dominated {
                if let Some(QueryRef::Track(_)) = d.winner {
                    // Only possible when every eligible detect query was
                    // carried for another real box.
                    for (i, &v) in det.iter().enumerate() {
                        if v > cfg.iou_threshold {
                            let taken_elsewhere = out.decisions.iter().any(|o| {
                                o.real_index != d.real_index && o.winner == Some(QueryRef::Detect(i))
                            });
                            prop_assert!(taken_elsewhere);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn single_box_detect_dominance() {
    let real = [BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap()];
    let det = [Query::detect(
        BoundingBox::new(0.5, 0.0, 10.0, 10.0).unwrap(),
        0.9,
    )];
    let trk = [Query::track(
        BoundingBox::new(2.0, 0.0, 10.0, 10.0).unwrap(),
        TrackId(1),
        0.9,
    )];
    let out = qtsi_merge(&det, &trk, &real, &[], &QtsiConfig::default()).unwrap();
    assert_eq!(out.decisions[0].winner, Some(QueryRef::Detect(0)));
}
