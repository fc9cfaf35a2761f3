//! Pixel confusion tallies with Dice and Jaccard overlap scores.
//!
//! Both scores follow the convention that two empty masks agree perfectly
//! (score 1.0) instead of evaluating `0/0`.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Exact per-pixel tallies of a predicted binary mask against ground truth.
pub fn confusion_counts(pred: ArrayView2<u8>, gt: ArrayView2<u8>) -> Result<ConfusionCounts> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => {
                return Err(Error::Invalid(format!(
                    "masks must be binary, found values ({p}, {g})"
                )))
            }
        }
    }
    Ok(c)
}

/// `2·TP / ((TP+FP) + (TP+FN))`, in `[0, 1]`.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = (c.tp + c.fp) + (c.tp + c.fn_);
    if denom == 0 {
        return 1.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

/// `TP / (TP+FP+FN)`, in `[0, 1]`.
pub fn jaccard(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        return 1.0;
    }
    c.tp as f64 / denom as f64
}

/// Scores are reported as percentages with two decimals.
pub fn percent(score: f64) -> String {
    format!("{:.2}", 100.0 * score)
}
