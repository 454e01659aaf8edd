//! Picking the in-scope threshold from scored calibration data.

use serde::{Deserialize, Serialize};

use super::ValidateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Fixed,
    MvrBudget(f64),
    Youden,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub tau: f64,
    pub calibration: Calibration,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            tau: 0.5,
            calibration: Calibration::Youden,
        }
    }
}

/// Every distinct score plus one value above the largest (1 when that still
/// exceeds it), ascending.
/// Cutting at `t` flags inputs scoring below `t`.
pub fn cut_candidates(scores: &[(f64, bool)]) -> Vec<f64> {
    let mut cuts: Vec<f64> = scores.iter().map(|s| s.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if let Some(&top) = cuts.last() {
        cuts.push(if top < 1.0 { 1.0 } else { next_up(top) });
    }
    cuts
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// `(cvr, mvr)` when inputs scoring below `tau` are flagged out of scope.
/// A rate with an empty denominator is 0.
pub fn cvr_mvr_at(scores: &[(f64, bool)], tau: f64) -> (f64, f64) {
    let (mut wrong, mut wrong_out, mut right, mut right_out) = (0usize, 0usize, 0usize, 0usize);
    for &(s, correct) in scores {
        let out = s < tau;
        if correct {
            right += 1;
            right_out += usize::from(out);
        } else {
            wrong += 1;
            wrong_out += usize::from(out);
        }
    }
    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    (rate(wrong_out, wrong), rate(right_out, right))
}

pub fn calibrate_threshold(scores: &[(f64, bool)], cfg: &ThresholdConfig) -> Result<f64, ValidateError> {
    if let Calibration::Fixed = cfg.calibration {
        return Ok(cfg.tau);
    }
    let right = scores.iter().filter(|s| s.1).count();
    let wrong = scores.len() - right;
    match cfg.calibration {
        Calibration::MvrBudget(_) if wrong == 0 && right > 0 => return Ok(0.0),
        _ if right == 0 || wrong == 0 => {
            return Err(ValidateError::DegenerateCalibrationSet(format!(
                "{right} correct and {wrong} incorrect examples"
            )))
        }
        _ => {}
    }
    let cuts = cut_candidates(scores);
    let tau = match cfg.calibration {
        Calibration::MvrBudget(budget) => cuts
            .iter()
            .rev()
            .copied()
            .find(|&t| cvr_mvr_at(scores, t).1 <= budget)
            .unwrap_or(cuts[0]),
        _ => {
            let mut best = (f64::NEG_INFINITY, cuts[0]);
            for &t in &cuts {
                let (cvr, mvr) = cvr_mvr_at(scores, t);
                if cvr - mvr > best.0 {
                    best = (cvr - mvr, t);
                }
            }
            best.1
        }
    };
    Ok(tau)
}
