// SPDX-License-Identifier: Apache-2.0

//! Series-level evaluation metrics.
//!
//! Predictions are class-1 probabilities; a series is called positive when its
//! probability is at least the threshold.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[f64], labels: &[u8], threshold: f64) -> Self {
        assert_eq!(predictions.len(), labels.len(), "predictions and labels differ in length");
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        // 2PR / (P + R) reduces to 2TP / (2TP + FP + FN), which is 0 exactly
        // when precision + recall is 0.
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        if total == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / total as f64
    }
}

pub fn f1_score(predictions: &[f64], labels: &[u8], threshold: f64) -> f64 {
    Confusion::from_predictions(predictions, labels, threshold).f1()
}

pub fn accuracy(predictions: &[f64], labels: &[u8], threshold: f64) -> f64 {
    Confusion::from_predictions(predictions, labels, threshold).accuracy()
}

/// Mann-Whitney AUC: the probability that a random positive outscores a random
/// negative, ties counting 1/2. Computed from mid-ranks in `O(n log n)`.
pub fn auc_score(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let mid_rank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += mid_rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub f1: f64,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub n_series: usize,
    pub threshold: f64,
}

pub fn evaluate(predictions: &[f64], labels: &[u8], threshold: f64) -> EvalResult {
    let confusion = Confusion::from_predictions(predictions, labels, threshold);
    EvalResult {
        f1: confusion.f1(),
        auc: auc_score(predictions, labels).ok(),
        accuracy: confusion.accuracy(),
        n_series: predictions.len(),
        threshold,
    }
}
