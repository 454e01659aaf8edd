//! Input validation: DSMG validity scores, baseline uncertainty metrics, thresholds.

mod calibrate;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{argmax, softmax_with_temperature, Classifier, ModelError, SubmodelSample, TokenizedInput};

pub use calibrate::{calibrate_threshold, cut_candidates, cvr_mvr_at, Calibration, ThresholdConfig};
pub use metrics::{
    entropy, fit_temperature, uncertainty_score, Evidence, EvidenceKind, MetricValue, UncertaintyMetricId,
    TEMPERATURE_GRID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidateError {
    #[error("need at least 2 sub-model samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample shapes disagree: {0}")]
    ShapeMismatch(String),
    #[error("metric {metric} cannot use this kind of evidence")]
    WrongEvidenceKind { metric: UncertaintyMetricId },
    #[error("degenerate calibration set: {0}")]
    DegenerateCalibrationSet(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmgWeights {
    pub w_var: f64,
    pub w_dist: f64,
}

impl Default for DsmgWeights {
    fn default() -> Self {
        DsmgWeights {
            w_var: 0.5,
            w_dist: 0.5,
        }
    }
}

impl DsmgWeights {
    pub fn validate(&self) -> Result<(), ValidateError> {
        let ok = self.w_var >= 0.0 && self.w_dist >= 0.0 && (self.w_var + self.w_dist - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(ValidateError::InvalidWeights(format!(
                "w_var {} + w_dist {} must be non-negative and sum to 1",
                self.w_var, self.w_dist
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityScore {
    pub variance_term: f64,
    pub distance_term: f64,
    pub combined: f64,
    pub w_var: f64,
    pub w_dist: f64,
    /// Class the sub-models agree on most (argmax of their mean probabilities).
    pub predicted: usize,
}

/// Depth-increasing layer weights `l / (1 + 2 + ... + L)`.
pub fn linear_layer_weights(layers: usize) -> Vec<f64> {
    let total = (layers * (layers + 1) / 2) as f64;
    (1..=layers).map(|l| l as f64 / total).collect()
}

fn check_shapes(samples: &[SubmodelSample]) -> Result<(usize, usize), ValidateError> {
    if samples.len() < 2 {
        return Err(ValidateError::TooFewSamples(samples.len()));
    }
    let first = &samples[0].output;
    let (c, l) = (first.probs.len(), first.probe_logits.len());
    if l == 0 {
        return Err(ValidateError::Model(ModelError::MissingProbes));
    }
    for s in samples {
        let o = &s.output;
        if o.probs.len() != c || o.probe_logits.len() != l || o.probe_logits.iter().any(|p| p.len() != c) {
            return Err(ValidateError::ShapeMismatch(format!(
                "expected {c} classes and {l} probe layers"
            )));
        }
    }
    Ok((c, l))
}

/// Variance about the first value, so identical inputs give exactly 0.
pub(crate) fn population_variance(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut first, mut sum, mut sq) = (0.0, None, 0.0, 0.0);
    for x in xs {
        let d = x - *first.get_or_insert(x);
        sum += d;
        sq += d * d;
        n += 1.0;
    }
    if n == 0.0 {
        return 0.0;
    }
    (sq / n - (sum / n).powi(2)).max(0.0)
}

/// Mean over sub-models of each class probability.
pub fn mean_probs(samples: &[SubmodelSample]) -> Vec<f64> {
    let c = samples[0].output.probs.len();
    let mut mean = vec![0.0; c];
    for s in samples {
        for (m, p) in mean.iter_mut().zip(&s.output.probs) {
            *m += p;
        }
    }
    let k = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    mean
}

/// Validity of one input from its sub-model samples. `layer_weights` defaults to
/// [`linear_layer_weights`].
pub fn dsmg_score(
    samples: &[SubmodelSample],
    weights: DsmgWeights,
    layer_weights: Option<&[f64]>,
) -> Result<ValidityScore, ValidateError> {
    weights.validate()?;
    let (c, l) = check_shapes(samples)?;
    let default_lw;
    let lw = match layer_weights {
        Some(w) if w.len() == l => w,
        Some(w) => {
            return Err(ValidateError::ShapeMismatch(format!(
                "{} layer weights for {l} layers",
                w.len()
            )))
        }
        None => {
            default_lw = linear_layer_weights(l);
            &default_lw
        }
    };
    let k = samples.len() as f64;
    let mean = mean_probs(samples);
    let mut var_sum = 0.0;
    for class in 0..c {
        var_sum += population_variance(samples.iter().map(|s| s.output.probs[class]));
    }
    let variance_term = (var_sum / c as f64 / 0.25).clamp(0.0, 1.0);

    let predicted = argmax(&mean);
    let mut dist_sum = 0.0;
    for s in samples {
        for (w, logits) in lw.iter().zip(&s.output.probe_logits) {
            let p = softmax_with_temperature(logits, 1.0)?;
            dist_sum += w * (1.0 - p[predicted]);
        }
    }
    let distance_term = (dist_sum / k).clamp(0.0, 1.0);
    let combined = weights.w_var * (1.0 - variance_term) + weights.w_dist * (1.0 - distance_term);
    Ok(ValidityScore {
        variance_term,
        distance_term,
        combined,
        w_var: weights.w_var,
        w_dist: weights.w_dist,
        predicted,
    })
}

/// Sub-model count, seed and weights for DSMG scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmgConfig {
    pub k: usize,
    pub base_seed: u64,
    pub weights: DsmgWeights,
}

impl Default for DsmgConfig {
    fn default() -> Self {
        DsmgConfig {
            k: 30,
            base_seed: 0,
            weights: DsmgWeights::default(),
        }
    }
}

/// Samples `cfg.k` sub-models and scores the input.
pub fn validity(
    model: &dyn Classifier,
    input: &TokenizedInput,
    cfg: &DsmgConfig,
) -> Result<ValidityScore, ValidateError> {
    let samples = model.infer_submodels(input, cfg.k, cfg.base_seed)?;
    dsmg_score(&samples, cfg.weights, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    InScope,
    OutOfScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricId {
    Dsmg,
    Uncertainty(UncertaintyMetricId),
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricId::Dsmg => f.write_str("dsmg"),
            MetricId::Uncertainty(m) => write!(f, "{m}"),
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("dsmg") {
            return Ok(MetricId::Dsmg);
        }
        s.parse().map(MetricId::Uncertainty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub verdict: Verdict,
    pub score: f64,
    pub metric: MetricId,
}

/// In scope iff `score >= tau`.
pub fn classify_input(score: f64, tau: f64, metric: MetricId) -> ValidationVerdict {
    let verdict = if score >= tau {
        Verdict::InScope
    } else {
        Verdict::OutOfScope
    };
    ValidationVerdict {
        verdict,
        score,
        metric,
    }
}

#[cfg(test)]
mod tests;
