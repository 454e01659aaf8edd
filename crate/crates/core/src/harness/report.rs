//! The experiment configuration and the versioned report it produces.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelSpec, TrainConfig};
use crate::search::{AdaptKind, SearchConfig, Strategy};
use crate::validate::{Calibration, DsmgConfig, ThresholdConfig, Verdict};

use super::corpus::{ClassRule, SplitSpec};
use super::metrics::ClassMetrics;
use super::HarnessError;

pub const REPORT_VERSION: &str = "scope-refine-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSource {
    Synthetic { n: usize, seed: u64, rule: ClassRule },
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub split: SplitSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub train_seed: u64,
    pub dsmg: DsmgConfig,
    pub threshold: ThresholdConfig,
    pub search: SearchConfig,
    /// `None` turns adaptation off; inputs are still scored.
    pub strategy: Option<Strategy>,
    pub search_seed: u64,
    /// Members of the deep-ensemble baseline, counting the main surrogate.
    pub ensemble_size: usize,
    /// Score the ten uncertainty baselines as well.
    pub baselines: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::seeded(1)
    }
}

impl ExperimentConfig {
    /// The default synthetic experiment with every seed set to `seed`.
    pub fn seeded(seed: u64) -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Synthetic {
                n: 1000,
                seed,
                rule: ClassRule::DivRisk,
            },
            split: SplitSpec {
                seed,
                ..SplitSpec::default()
            },
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            train_seed: seed,
            dsmg: DsmgConfig {
                base_seed: seed,
                ..DsmgConfig::default()
            },
            threshold: ThresholdConfig {
                tau: 0.5,
                calibration: Calibration::MvrBudget(0.07),
            },
            search: SearchConfig::default(),
            strategy: Some(Strategy::Aes),
            search_seed: seed,
            ensemble_size: 3,
            baselines: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub train: usize,
    pub calibrate: usize,
    pub test: usize,
    pub mispredicted: usize,
    pub flagged: usize,
    pub adapted: usize,
    pub refined: usize,
    pub best_effort: usize,
    pub corrected: usize,
    pub regressed: usize,
    pub still_wrong: usize,
    pub still_correct: usize,
}

/// One test input's path through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub score: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome: Option<AdaptKind>,
    pub final_prediction: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adapted_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub genome: Option<String>,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: String,
    pub config: ExperimentConfig,
    /// Set when some component failed; `errors` says which.
    pub partial: bool,
    pub errors: Vec<String>,
    pub counts: Counts,
    pub surrogate_train_accuracy: f64,
    pub baseline: ClassMetrics,
    pub adapted: ClassMetrics,
    pub tau: f64,
    pub temperature: f64,
    /// DSMG AUC for telling correct predictions from mispredictions.
    pub auc: Option<f64>,
    pub cvr: Option<f64>,
    pub mvr: Option<f64>,
    /// The same AUC for each uncertainty baseline, by metric name.
    pub uncertainty_auc: BTreeMap<String, Option<f64>>,
    pub corrected_fraction: f64,
    pub regressed_fraction: f64,
    pub transforms_applied: usize,
    /// Applied transformations per second of transformation time.
    pub tps: f64,
    pub mean_adapt_seconds: f64,
    pub wall_seconds: f64,
    pub inputs: Vec<InputRecord>,
}

impl MetricsReport {
    /// A copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport {
            tps: 0.0,
            mean_adapt_seconds: 0.0,
            wall_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<MetricsReport, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| HarnessError::MalformedReport(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(REPORT_VERSION) => {}
            Some(other) => return Err(HarnessError::VersionMismatch(other.to_string())),
            None => return Err(HarnessError::VersionMismatch("<missing>".into())),
        }
        serde_json::from_value(value).map_err(|e| HarnessError::MalformedReport(e.to_string()))
    }
}

pub fn report_write(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    std::fs::write(path, report.to_json() + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn report_read(path: impl AsRef<Path>) -> Result<MetricsReport, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    MetricsReport::from_json(&text)
}
