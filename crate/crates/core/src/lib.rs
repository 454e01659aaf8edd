//! Inference-time input refinement for code classifiers.
//!
//! The pipeline has three stages. [`validate`] scores how reliably a model is
//! likely to handle an input, using dropout sub-models and per-layer probes.
//! [`transform`] rewrites MiniC programs with semantics-preserving operators.
//! [`search`] looks for the sequence of rewrites the model is most confident about.
//! [`harness`] wires these together into reproducible experiments.

pub mod harness;
pub mod minic;
pub mod model;
pub mod search;
pub mod transform;
pub mod validate;
