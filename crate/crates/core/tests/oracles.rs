mod common;

use common::{brute_force_aps, nms_is_valid, topk_by_sort};
use motionloc::localization::{nms, Proposal};
use motionloc::metrics::{average_precision, interpolated_ap, Detection, DetectionSet, GroundTruth};
use motionloc::numcore::{topk_indices, Tape, Tensor2};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn topk_matches_full_sort(values in prop::collection::vec(-5i32..5, 1..=12), k_raw in 1usize..=12) {
        // Small integers make ties common.
        let v: Vec<f64> = values.iter().map(|&x| x as f64 / 2.0).collect();
        let k = k_raw.min(v.len());
        let mut got = topk_indices(&v, k);
        got.sort_unstable();
        prop_assert_eq!(&got, &topk_by_sort(&v, k));

        let mut sorted = v.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expect = sorted[..k].iter().sum::<f64>() / k as f64;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::column(&v));
        let (m, _) = tape.topk_mean_cols(x, k).unwrap();
        prop_assert_eq!(tape.scalar_value(m), expect);
    }
}

fn proposal_strategy() -> impl Strategy<Value = Vec<Proposal>> {
    prop::collection::vec((0usize..20, 0usize..8, 0u8..6), 0..12).prop_map(|raw| {
        raw.into_iter()
            .map(|(s, len, conf)| Proposal {
                start: s,
                end: s + len,
                class: 0,
                confidence: conf as f64 / 5.0,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nms_satisfies_validity_oracle(props in proposal_strategy(), thr in prop::sample::select(vec![0.0, 0.3, 0.5, 0.7, 0.9])) {
        let kept = nms(&props, thr);
        if let Err(e) = nms_is_valid(&props, &kept, thr) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn hand_derived_pr_case() {
    // One gt; a high-confidence miss then a low-confidence hit.
    let gts = [GroundTruth { video: 0, start: 10, end: 19 }];
    let dets = [
        Detection { video: 0, start: 40, end: 49, confidence: 0.9 },
        Detection { video: 0, start: 10, end: 19, confidence: 0.2 },
    ];
    assert_eq!(average_precision(&dets, &gts, 0.5), Some(0.5));
    assert_eq!(interpolated_ap(&[false, true], 1), 0.5);
}

#[test]
fn perfect_and_empty_cases() {
    let gts = [GroundTruth { video: 0, start: 0, end: 4 }, GroundTruth { video: 1, start: 3, end: 8 }];
    let dets: Vec<Detection> = gts
        .iter()
        .map(|g| Detection { video: g.video, start: g.start, end: g.end, confidence: 1.0 })
        .collect();
    assert_eq!(average_precision(&dets, &gts, 0.9), Some(1.0));
    assert_eq!(average_precision(&[], &gts, 0.5), Some(0.0));
    assert_eq!(average_precision(&dets, &[], 0.5), None);
}

#[test]
fn fixed_scenario_matches_exhaustive_oracle() {
    // Two videos, three proposals.
    let gts = [
        GroundTruth { video: 0, start: 2, end: 9 },
        GroundTruth { video: 0, start: 14, end: 18 },
        GroundTruth { video: 1, start: 5, end: 12 },
    ];
    let dets = [
        Detection { video: 0, start: 3, end: 10, confidence: 0.8 },
        Detection { video: 1, start: 0, end: 6, confidence: 0.7 },
        Detection { video: 0, start: 13, end: 18, confidence: 0.4 },
    ];
    for thr in [0.1, 0.3, 0.5, 0.7] {
        let oracle = brute_force_aps(&dets, &gts, thr);
        assert_eq!(oracle.len(), 1, "one greedy assignment at {thr}");
        let got = average_precision(&dets, &gts, thr).unwrap();
        assert!((got - oracle[0]).abs() < 1e-12, "thr {thr}: {got} vs {}", oracle[0]);
    }
}

fn scenario() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
    let det = (0usize..2, 0usize..16, 0usize..6, 1u32..1000);
    let gt = (0usize..2, 0usize..16, 0usize..6);
    (prop::collection::vec(det, 0..5), prop::collection::vec(gt, 1..4)).prop_map(|(d, g)| {
        let mut seen = std::collections::BTreeSet::new();
        let dets = d
            .into_iter()
            .filter(|x| seen.insert(x.3))
            .map(|(v, s, l, c)| Detection { video: v, start: s, end: s + l, confidence: c as f64 })
            .collect();
        let gts = g.into_iter().map(|(v, s, l)| GroundTruth { video: v, start: s, end: s + l }).collect();
        (dets, gts)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ap_matches_exhaustive_oracle((dets, gts) in scenario(), thr in prop::sample::select(vec![0.1, 0.3, 0.5, 0.7])) {
        let got = average_precision(&dets, &gts, thr).unwrap();
        let oracle = brute_force_aps(&dets, &gts, thr);
        prop_assert!(!oracle.is_empty());
        prop_assert!(oracle.iter().any(|a| (a - got).abs() < 1e-12), "{} not in {:?}", got, oracle);
    }

    #[test]
    fn ap_invariant_to_monotone_confidence_maps((dets, gts) in scenario()) {
        let warped: Vec<Detection> = dets.iter().map(|d| Detection { confidence: d.confidence.ln() * 3.0 + 7.0, ..*d }).collect();
        prop_assert_eq!(average_precision(&dets, &gts, 0.5), average_precision(&warped, &gts, 0.5));
    }

    #[test]
    fn map_non_increasing_in_threshold((dets, gts) in scenario()) {
        let mut set = DetectionSet::default();
        for d in dets { set.add_detection(0, d); }
        for g in gts { set.add_ground_truth(0, g); }
        let maps: Vec<f64> = (1..10).map(|i| set.map_at(i as f64 / 10.0).1).collect();
        prop_assert!(maps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", maps);
    }
}
