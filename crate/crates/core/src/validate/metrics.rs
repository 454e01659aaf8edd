//! Baseline uncertainty metrics. Every score is oriented so higher means more
//! confident; the conventional value is kept alongside as `raw`.

use serde::{Deserialize, Serialize};

use crate::model::{argmax, softmax_with_temperature, ModelOutput, SubmodelSample};

use super::ValidateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMetricId {
    Vanilla,
    TemperatureScaled,
    Entropy,
    PredictiveEntropy,
    MutualInformation,
    LeastConfidence,
    RatioConfidence,
    MarginConfidence,
    #[serde(rename = "mc_dropout_variance")]
    MCDropoutVariance,
    DeepEnsemble,
}

impl UncertaintyMetricId {
    pub const ALL: [UncertaintyMetricId; 10] = [
        UncertaintyMetricId::Vanilla,
        UncertaintyMetricId::TemperatureScaled,
        UncertaintyMetricId::Entropy,
        UncertaintyMetricId::PredictiveEntropy,
        UncertaintyMetricId::MutualInformation,
        UncertaintyMetricId::LeastConfidence,
        UncertaintyMetricId::RatioConfidence,
        UncertaintyMetricId::MarginConfidence,
        UncertaintyMetricId::MCDropoutVariance,
        UncertaintyMetricId::DeepEnsemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UncertaintyMetricId::Vanilla => "vanilla",
            UncertaintyMetricId::TemperatureScaled => "temperature_scaled",
            UncertaintyMetricId::Entropy => "entropy",
            UncertaintyMetricId::PredictiveEntropy => "predictive_entropy",
            UncertaintyMetricId::MutualInformation => "mutual_information",
            UncertaintyMetricId::LeastConfidence => "least_confidence",
            UncertaintyMetricId::RatioConfidence => "ratio_confidence",
            UncertaintyMetricId::MarginConfidence => "margin_confidence",
            UncertaintyMetricId::MCDropoutVariance => "mc_dropout_variance",
            UncertaintyMetricId::DeepEnsemble => "deep_ensemble",
        }
    }

    /// What kind of evidence the metric reads.
    pub fn needs(self) -> EvidenceKind {
        match self {
            UncertaintyMetricId::PredictiveEntropy
            | UncertaintyMetricId::MutualInformation
            | UncertaintyMetricId::MCDropoutVariance => EvidenceKind::Samples,
            UncertaintyMetricId::DeepEnsemble => EvidenceKind::Ensemble,
            _ => EvidenceKind::Single,
        }
    }
}

impl std::fmt::Display for UncertaintyMetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for UncertaintyMetricId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        UncertaintyMetricId::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    Single,
    Samples,
    Ensemble,
}

#[derive(Debug, Clone, Copy)]
pub enum Evidence<'a> {
    /// One deterministic forward pass.
    Single(&'a ModelOutput),
    /// Dropout sub-model samples of one model.
    Samples(&'a [SubmodelSample]),
    /// One deterministic output per independently trained model.
    Ensemble(&'a [ModelOutput]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub score: f64,
    pub raw: f64,
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

fn mean_of<'a>(dists: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for d in dists {
        if sum.is_empty() {
            sum = vec![0.0; d.len()];
        }
        for (s, x) in sum.iter_mut().zip(d) {
            *s += x;
        }
        n += 1.0;
    }
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// Largest and second-largest entries.
fn top_two(p: &[f64]) -> (f64, f64) {
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted[0], sorted.get(1).copied().unwrap_or(0.0))
}

/// Scores one input. `temperature` is only read by `TemperatureScaled`.
pub fn uncertainty_score(
    metric: UncertaintyMetricId,
    evidence: Evidence<'_>,
    temperature: f64,
) -> Result<MetricValue, ValidateError> {
    use UncertaintyMetricId as M;
    let wrong = || ValidateError::WrongEvidenceKind { metric };
    let value = |score: f64, raw: f64| Ok(MetricValue { score, raw });
    match (metric, evidence) {
        (M::Vanilla | M::LeastConfidence | M::Entropy | M::RatioConfidence | M::MarginConfidence, Evidence::Single(o)) => {
            let p = &o.probs;
            let hmax = (p.len() as f64).ln();
            let (p1, p2) = top_two(p);
            match metric {
                M::Vanilla => value(p1, p1),
                M::LeastConfidence => value(p1, 1.0 - p1),
                M::Entropy => {
                    let h = entropy(p);
                    value(hmax - h, h)
                }
                M::MarginConfidence => value(p1 - p2, p1 - p2),
                _ => {
                    let r = if p1 > 0.0 { 1.0 - p2 / p1 } else { 0.0 };
                    value(r, r)
                }
            }
        }
        (M::TemperatureScaled, Evidence::Single(o)) => {
            let p = softmax_with_temperature(&o.logits, temperature)?;
            let top = top_two(&p).0;
            value(top, top)
        }
        (M::PredictiveEntropy | M::MutualInformation | M::MCDropoutVariance, Evidence::Samples(s)) => {
            if s.len() < 2 {
                return Err(ValidateError::TooFewSamples(s.len()));
            }
            let mean = mean_of(s.iter().map(|x| x.output.probs.as_slice()));
            let hmax = (mean.len() as f64).ln();
            match metric {
                M::PredictiveEntropy => {
                    let h = entropy(&mean);
                    value(hmax - h, h)
                }
                M::MutualInformation => {
                    let expected = s.iter().map(|x| entropy(&x.output.probs)).sum::<f64>() / s.len() as f64;
                    let mi = (entropy(&mean) - expected).max(0.0);
                    value(hmax - mi, mi)
                }
                _ => {
                    let y = argmax(&mean);
                    let var = super::population_variance(s.iter().map(|x| x.output.probs[y]));
                    value(0.25 - var, var)
                }
            }
        }
        (M::DeepEnsemble, Evidence::Ensemble(members)) => {
            if members.is_empty() {
                return Err(ValidateError::TooFewSamples(0));
            }
            let mean = mean_of(members.iter().map(|o| o.probs.as_slice()));
            let h = entropy(&mean);
            value((mean.len() as f64).ln() - h, h)
        }
        _ => Err(wrong()),
    }
}

pub const TEMPERATURE_GRID: [f64; 7] = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0];

/// Grid temperature with the lowest mean negative log-likelihood on `(logits, label)`
/// pairs. Ties go to the earlier grid value; an empty set yields 1.
pub fn fit_temperature(data: &[(Vec<f64>, usize)]) -> f64 {
    if data.is_empty() {
        return 1.0;
    }
    let mut best = (f64::INFINITY, 1.0);
    for &t in &TEMPERATURE_GRID {
        let nll = data
            .iter()
            .map(|(logits, y)| {
                let p = softmax_with_temperature(logits, t).expect("grid is positive");
                -p[*y].max(1e-300).ln()
            })
            .sum::<f64>()
            / data.len() as f64;
        if nll < best.0 {
            best = (nll, t);
        }
    }
    best.1
}
