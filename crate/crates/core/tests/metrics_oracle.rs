use esad_core::dataset::BinaryLabel::{self, Anomalous, Normal};
use esad_core::metrics::{
    average_precision, classification_report, confusion_at_threshold, evaluate_scores, roc_auc, MetricsError,
    ScoredExample,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod oracles;

fn ex(pairs: &[(f64, BinaryLabel)]) -> Vec<ScoredExample> {
    pairs.iter().map(|&(s, l)| ScoredExample::new(s, l)).collect()
}

#[test]
fn auc_and_ap_match_rank_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n = 2 + trial * 5;
        let data = oracles::random_scored(&mut rng, n);
        let (auc, _) = roc_auc(&data).unwrap();
        let (ap, _) = average_precision(&data).unwrap();
        assert!((auc - oracles::mann_whitney_auc(&data)).abs() < 1e-9, "n={n}");
        assert!((ap - oracles::rank_average_precision(&data)).abs() < 1e-9, "n={n}");
    }
}

#[test]
fn confusion_matches_brute_force_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = oracles::random_scored(&mut rng, 100);
    let c = confusion_at_threshold(&data, 0.5).unwrap();
    let tally = |pred: bool, label| data.iter().filter(|e| (e.score >= 0.5) == pred && e.label == label).count();
    assert_eq!((c.tn, c.fp, c.fn_, c.tp), (tally(false, Normal), tally(true, Normal), tally(false, Anomalous), tally(true, Anomalous)));
}

#[test]
fn hand_computed_cases() {
    let c = confusion_at_threshold(&ex(&[(0.9, Anomalous), (0.1, Normal)]), 0.5).unwrap();
    assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
    let c = confusion_at_threshold(&ex(&[(0.5, Normal)]), 0.5).unwrap();
    assert_eq!(c.fp, 1);

    let last = ex(&[(0.9, Normal), (0.8, Normal), (0.7, Normal), (0.1, Anomalous)]);
    assert!((average_precision(&last).unwrap().0 - 0.25).abs() < 1e-15);

    let separated = ex(&[(0.9, Anomalous), (0.8, Anomalous), (0.2, Normal), (0.1, Normal)]);
    assert_eq!(roc_auc(&separated).unwrap().0, 1.0);
    assert_eq!(average_precision(&separated).unwrap().0, 1.0);
    let same = ex(&[(0.4, Anomalous), (0.4, Normal), (0.4, Normal)]);
    assert_eq!(roc_auc(&same).unwrap().0, 0.5);

    let all_positive_calls = ex(&[(0.9, Anomalous), (0.8, Normal), (0.7, Anomalous), (0.6, Normal)]);
    let r = classification_report(&all_positive_calls, 0.5).unwrap();
    assert_eq!((r.classes[0].precision, r.classes[0].recall), (0.0, 0.0));
    assert_eq!((r.classes[1].precision, r.classes[1].recall), (0.5, 1.0));

    let perfect = classification_report(&separated, 0.5).unwrap();
    for c in &perfect.classes {
        assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
    }
}

#[test]
fn error_cases() {
    assert!(matches!(confusion_at_threshold(&[], 0.5), Err(MetricsError::Empty)));
    assert!(matches!(roc_auc(&ex(&[(0.3, Normal)])), Err(MetricsError::SingleClass)));
    assert!(matches!(classification_report(&ex(&[(0.3, Anomalous)]), 0.5), Err(MetricsError::SingleClass)));
    assert!(matches!(average_precision(&ex(&[(0.3, Normal)])), Err(MetricsError::NoPositives)));
    assert!(matches!(roc_auc(&ex(&[(1.5, Normal), (0.2, Anomalous)])), Err(MetricsError::BadScore { index: 0, .. })));
}

fn scored() -> impl Strategy<Value = Vec<ScoredExample>> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), 2..500).prop_filter_map("both classes", |v| {
        let data: Vec<ScoredExample> = v
            .into_iter()
            .map(|(s, a)| ScoredExample::new(s, if a { Anomalous } else { Normal }))
            .collect();
        let p = data.iter().filter(|e| e.label == Anomalous).count();
        (p > 0 && p < data.len()).then_some(data)
    })
}

proptest! {
    #[test]
    fn auc_is_pair_statistic(data in scored()) {
        prop_assert!((roc_auc(&data).unwrap().0 - oracles::mann_whitney_auc(&data)).abs() < 1e-9);
    }

    #[test]
    fn roc_is_monotone_and_anchored(data in scored()) {
        let (_, curve) = roc_auc(&data).unwrap();
        prop_assert_eq!((curve[0].x, curve[0].y), (0.0, 0.0));
        let last = curve.last().unwrap();
        prop_assert_eq!((last.x, last.y), (1.0, 1.0));
        prop_assert!(curve.windows(2).all(|w| w[1].x >= w[0].x && w[1].y >= w[0].y));
    }

    #[test]
    fn label_swap_symmetry(data in scored()) {
        let swapped: Vec<ScoredExample> = data
            .iter()
            .map(|e| ScoredExample::new(1.0 - e.score, if e.label == Anomalous { Normal } else { Anomalous }))
            .collect();
        prop_assert!((roc_auc(&data).unwrap().0 - roc_auc(&swapped).unwrap().0).abs() < 1e-9);
    }

    #[test]
    fn monotone_transform_invariance(data in scored()) {
        let cubed: Vec<ScoredExample> = data.iter().map(|e| ScoredExample::new(e.score.powi(3), e.label)).collect();
        prop_assert!((roc_auc(&data).unwrap().0 - roc_auc(&cubed).unwrap().0).abs() < 1e-9);
        prop_assert!((average_precision(&data).unwrap().0 - average_precision(&cubed).unwrap().0).abs() < 1e-9);
    }

    #[test]
    fn report_is_consistent(data in scored()) {
        let r = evaluate_scores(&data, "float32", "test", 0.5).unwrap();
        let c = r.confusion;
        prop_assert_eq!(c.tn + c.fp + c.fn_ + c.tp, r.total);
        prop_assert_eq!(r.accuracy, (c.tp + c.tn) as f64 / r.total as f64);
        prop_assert_eq!(r.classes.iter().map(|k| k.support).sum::<usize>(), r.total);
        for k in &r.classes {
            for v in [k.precision, k.recall, k.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
