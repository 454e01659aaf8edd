//! The classifier under refinement.
//!
//! [`ModelHandle`] is the built-in surrogate: a hashed token embedding, a stack of
//! position-wise rectifier layers with a mean-pooled snapshot after each, a linear
//! head and optional per-layer probes. [`RemoteModel`] speaks the line protocol in
//! [`wire`] to an external server. Both implement [`Classifier`].

mod format;
mod surrogate;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minic::{lex, print_source, SourceUnit};

pub use format::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC};
pub use surrogate::{
    fit_layer_probes, gradient_check, probe_accuracies, train_surrogate, Example, ModelHandle, TrainConfig,
    TrainReport,
};
pub use wire::RemoteModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("input has no tokens")]
    EmptyTokenList,
    #[error("k must be >= 2")]
    KTooSmall(usize),
    #[error("temperature must be positive, got {0}")]
    NonpositiveTemperature(f64),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("model has no layer probes")]
    MissingProbes,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error("remote model: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub vocab_hash_dim: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            num_layers: 4,
            hidden_dim: 64,
            num_classes: 2,
            vocab_hash_dim: 2048,
            dropout_rate: 0.1,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        if self.num_layers < 2 {
            return bad("num_layers must be >= 2");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        if self.hidden_dim == 0 || self.vocab_hash_dim == 0 {
            return bad("hidden_dim and vocab_hash_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Token texts of a program's canonical source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub tokens: Vec<String>,
}

impl TokenizedInput {
    pub fn from_unit(unit: &SourceUnit) -> TokenizedInput {
        let text = print_source(unit);
        let tokens = lex(&text)
            .expect("printer output always lexes")
            .into_iter()
            .map(|t| t.kind.to_string())
            .collect();
        TokenizedInput { tokens }
    }

    pub fn from_tokens(tokens: Vec<String>) -> TokenizedInput {
        TokenizedInput { tokens }
    }

    /// Hashed vocabulary indices in `[0, dim)`.
    pub fn indices(&self, dim: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .map(|t| (fnv1a(t.as_bytes()) % dim as u64) as usize)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub layer_snapshots: Vec<Vec<f64>>,
    /// Empty when the model has no probes.
    pub probe_logits: Vec<Vec<f64>>,
}

impl ModelOutput {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelSample {
    pub dropout_seed: u64,
    pub output: ModelOutput,
}

/// Anything that can be validated and refined against.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn num_layers(&self) -> usize;
    fn dropout_rate(&self) -> f64;
    fn infer(&self, input: &TokenizedInput) -> Result<ModelOutput, ModelError>;
    fn infer_submodels(
        &self,
        input: &TokenizedInput,
        k: usize,
        base_seed: u64,
    ) -> Result<Vec<SubmodelSample>, ModelError>;

    /// Sampler for scoring many inputs against one fixed set of sub-models.
    /// Results equal `infer_submodels(input, k, base_seed)`.
    fn submodel_sampler<'a>(&'a self, k: usize, base_seed: u64) -> Box<dyn SubmodelSampler + 'a> {
        Box::new(DirectSampler {
            model: self,
            k,
            base_seed,
        })
    }
}

pub trait SubmodelSampler: Sync {
    fn sample(&self, input: &TokenizedInput) -> Result<Vec<SubmodelSample>, ModelError>;
}

struct DirectSampler<'a, C: ?Sized> {
    model: &'a C,
    k: usize,
    base_seed: u64,
}

impl<C: Classifier + ?Sized> SubmodelSampler for DirectSampler<'_, C> {
    fn sample(&self, input: &TokenizedInput) -> Result<Vec<SubmodelSample>, ModelError> {
        self.model.infer_submodels(input, self.k, self.base_seed)
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_with_temperature(logits: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
    if !(t > 0.0) {
        return Err(ModelError::NonpositiveTemperature(t));
    }
    Ok(softmax_scaled(logits, t))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_scaled(logits, 1.0)
}

fn softmax_scaled(logits: &[f64], t: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / t).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
