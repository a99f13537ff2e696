use proptest::prelude::*;

use toll::eval::{aggregate, f1_at_rate, roc_auc, ScoredSet};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0u8..4).prop_map(f64::from), -5.0f64..5.0], n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

fn both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

proptest! {
    #[test]
    fn auc_ignores_monotone_rescaling((scores, labels) in instance()) {
        prop_assume!(both_classes(&labels));
        let base = roc_auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s.tanh() + 7.0).collect();
        let other = roc_auc(&ScoredSet::new(moved, labels).unwrap()).unwrap();
        prop_assert!((base - other).abs() < 1e-12);
    }

    #[test]
    fn auc_flips_under_negation_and_relabeling((scores, labels) in instance()) {
        prop_assume!(both_classes(&labels));
        let base = roc_auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = roc_auc(&ScoredSet::new(negated.clone(), labels).unwrap()).unwrap();
        let b = roc_auc(&ScoredSet::new(scores, flipped.clone()).unwrap()).unwrap();
        let c = roc_auc(&ScoredSet::new(negated, flipped).unwrap()).unwrap();
        prop_assert!((a - (1.0 - base)).abs() < 1e-12);
        prop_assert!((b - (1.0 - base)).abs() < 1e-12);
        prop_assert!((c - base).abs() < 1e-12);
    }

    #[test]
    fn f1_ignores_monotone_rescaling((scores, labels) in instance(), rate in 0.01f64..0.99) {
        let base = f1_at_rate(&ScoredSet::new(scores.clone(), labels.clone()).unwrap(), rate).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let other = f1_at_rate(&ScoredSet::new(moved, labels).unwrap(), rate).unwrap();
        prop_assert_eq!(base, other);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn aggregate_ignores_seed_order(values in prop::collection::vec(0.0f64..1.0, 2..12), rot in 0usize..12) {
        let mut rotated = values.clone();
        let k = rot % values.len();
        rotated.rotate_left(k);
        let a = aggregate(&values).unwrap();
        let b = aggregate(&rotated).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.std - b.std).abs() < 1e-12);
    }
}

#[test]
fn perfect_ranking_gives_unit_f1_at_the_true_rate() {
    let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let labels: Vec<u8> = (0..100).map(|i| (i >= 85) as u8).collect();
    let set = ScoredSet::new(scores, labels).unwrap();
    assert_eq!(f1_at_rate(&set, 0.15).unwrap(), 1.0);
    assert_eq!(roc_auc(&set).unwrap(), 1.0);
}
