//! Corpora, evaluation metrics and the end-to-end experiment runner.

mod corpus;
mod metrics;
mod pipeline;
mod report;

use thiserror::Error;

use crate::model::ModelError;
use crate::search::SearchError;
use crate::validate::ValidateError;

pub use corpus::{
    corpus_jsonl, div_risk, load_corpus, parse_corpus, split_indices, synth_corpus, write_corpus, ClassRule,
    CorpusRecord, Split, SplitSpec,
};
pub use metrics::{auc, cvr_mvr, ClassMetrics};
pub use pipeline::run_pipeline;
pub use report::{
    report_read, report_write, Counts, CorpusSource, ExperimentConfig, InputRecord, MetricsReport, REPORT_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("record '{id}': {message}")]
    UnparseableSource { id: String, message: String },
    #[error("could not balance {requested} programs within {tries} attempts")]
    GenerationExhausted { requested: usize, tries: usize },
    #[error("both correct and incorrect examples are required")]
    SingleClass,
    #[error("a rate has an empty denominator")]
    EmptyDenominator,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unsupported report version '{0}'")]
    VersionMismatch(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[cfg(test)]
mod tests;
