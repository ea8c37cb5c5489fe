mod common;

use crosswise_core::eval::{metrics, ConfusionCounts};
use num_rational::Ratio;
use proptest::prelude::*;

#[test]
fn rational_metrics_match_hand_formulas() {
    assert_eq!(common::rational_metric_mismatches(2024, 20), 0);
}

#[test]
fn worked_example_is_exact() {
    let m = metrics::<Ratio<i64>>(&ConfusionCounts::new(50, 40, 5, 5)).unwrap();
    assert_eq!(m.accuracy, Ratio::new(9, 10));
    assert_eq!(m.precision, Some(Ratio::new(10, 11)));
    assert_eq!(m.recall, Some(Ratio::new(10, 11)));
    assert_eq!(m.f1, Some(Ratio::new(10, 11)));
}

proptest! {
    #[test]
    fn f1_is_harmonic_mean(tp in 1u64..10_000, tn in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
        let m = metrics::<f64>(&ConfusionCounts::new(tp, tn, fp, fn_)).unwrap();
        let (p, r) = (m.precision.unwrap(), m.recall.unwrap());
        prop_assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() <= 1e-12);
    }

    #[test]
    fn accuracy_ignores_which_class_is_positive(tp in 0u64..10_000, tn in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
        let c = ConfusionCounts::new(tp, tn, fp, fn_);
        prop_assume!(c.total() > 0);
        let a = metrics::<Ratio<i64>>(&c).unwrap().accuracy;
        let b = metrics::<Ratio<i64>>(&c.swapped()).unwrap().accuracy;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn metrics_stay_in_unit_interval(tp in 0u64..1000, tn in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
        let c = ConfusionCounts::new(tp, tn, fp, fn_);
        prop_assume!(c.total() > 0);
        let m = metrics::<f64>(&c).unwrap();
        for v in [Some(m.accuracy), m.precision, m.recall, m.f1].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(m.precision.is_none(), tp + fp == 0);
        prop_assert_eq!(m.recall.is_none(), tp + fn_ == 0);
    }
}
