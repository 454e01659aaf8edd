//! Evaluation metrics over a test split.

use serde::{Deserialize, Serialize};

use crate::validate::{ValidationVerdict, Verdict};

use super::HarnessError;

/// Probability that a random correct input outscores a random incorrect one, ties
/// counting one half. Computed from midranks.
pub fn auc(scores: &[f64], correct: &[bool]) -> Result<f64, HarnessError> {
    if scores.len() != correct.len() {
        return Err(HarnessError::LengthMismatch(scores.len(), correct.len()));
    }
    let pos = correct.iter().filter(|&&c| c).count();
    let neg = correct.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(HarnessError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| correct[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// `(cvr, mvr)`: the share of mispredictions flagged out of scope, and the share of
/// correct predictions flagged.
pub fn cvr_mvr(verdicts: &[ValidationVerdict], correct: &[bool]) -> Result<(f64, f64), HarnessError> {
    if verdicts.len() != correct.len() {
        return Err(HarnessError::LengthMismatch(verdicts.len(), correct.len()));
    }
    let (mut wrong, mut wrong_out, mut right, mut right_out) = (0, 0, 0, 0);
    for (v, &c) in verdicts.iter().zip(correct) {
        let out = v.verdict == Verdict::OutOfScope;
        if c {
            right += 1;
            right_out += usize::from(out);
        } else {
            wrong += 1;
            wrong_out += usize::from(out);
        }
    }
    if wrong == 0 || right == 0 {
        return Err(HarnessError::EmptyDenominator);
    }
    Ok((wrong_out as f64 / wrong as f64, right_out as f64 / right as f64))
}

/// Binary classification quality with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    /// Undefined ratios (no predicted or no actual positives) are reported as 0.
    pub fn compute(predicted: &[usize], labels: &[usize]) -> Result<ClassMetrics, HarnessError> {
        if predicted.len() != labels.len() {
            return Err(HarnessError::LengthMismatch(predicted.len(), labels.len()));
        }
        if predicted.is_empty() {
            return Err(HarnessError::EmptyDenominator);
        }
        let (mut tp, mut fp, mut fneg, mut hits) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &y) in predicted.iter().zip(labels) {
            hits += usize::from(p == y);
            match (p == 1, y == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(ClassMetrics {
            accuracy: ratio(hits, predicted.len()),
            precision,
            recall,
            f1,
        })
    }
}
