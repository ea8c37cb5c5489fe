//! Confusion counts and the four binary classification metrics, with
//! crosswalk B as the positive class.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Adds one outcome; `truth` and `predicted` are true for the positive class.
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    /// Same outcomes seen with the other class as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, tn: self.tp, fp: self.fn_, fn_: self.fp }
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub accuracy: T,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
}

fn ratio<T: Num + Copy>(num: T, den: T) -> Option<T> {
    (den != T::zero()).then(|| num / den)
}

pub fn metrics<T: Num + FromPrimitive + Copy>(c: &ConfusionCounts) -> Result<Metrics<T>> {
    if c.total() == 0 {
        return Err(Error::EmptyCounts);
    }
    let n = |v: u64| T::from_u64(v).expect("count representable");
    let (tp, tn, fp, fn_) = (n(c.tp), n(c.tn), n(c.fp), n(c.fn_));
    let accuracy = (tp + tn) / n(c.total());
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => ratio(n(2) * p * r, p + r),
        _ => None,
    };
    Ok(Metrics { accuracy, precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = metrics::<f64>(&ConfusionCounts::new(50, 40, 5, 5)).unwrap();
        assert!((m.accuracy - 0.9).abs() < 1e-15);
        for v in [m.precision, m.recall, m.f1] {
            assert!((v.unwrap() - 10.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_classifier() {
        let m = metrics::<f64>(&ConfusionCounts::new(7, 3, 0, 0)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn undefined_precision() {
        let m = metrics::<f64>(&ConfusionCounts::new(0, 4, 0, 3)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn all_zero_is_error() {
        assert!(matches!(metrics::<f64>(&ConfusionCounts::default()), Err(Error::EmptyCounts)));
    }

    #[test]
    fn record_tallies() {
        let mut c = ConfusionCounts::default();
        for (t, p) in [(true, true), (true, false), (false, true), (false, false), (false, false)] {
            c.record(t, p);
        }
        assert_eq!(c, ConfusionCounts::new(1, 2, 1, 1));
    }
}
