//! Picking the model a command talks to.

use std::net::TcpListener;
use std::path::Path;

use scope_refine::harness::{synth_corpus, ClassRule};
use scope_refine::minic::parse;
use scope_refine::model::wire::{check_protocol, serve_tcp, ConformanceReport};
use scope_refine::model::{
    fit_layer_probes, load_model, train_surrogate, Classifier, Example, ModelHandle, ModelSpec, RemoteModel,
    TokenizedInput, TrainConfig,
};

use crate::{diag, Failure};

pub const ENDPOINT_VAR: &str = "SCOPE_REFINE_MODEL_ENDPOINT";

pub enum LoadedModel {
    Local(ModelHandle),
    Remote(RemoteModel),
}

impl LoadedModel {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            LoadedModel::Local(m) => m,
            LoadedModel::Remote(m) => m,
        }
    }
}

/// The server in `SCOPE_REFINE_MODEL_ENDPOINT` if set, else the model file.
pub fn open_model(path: Option<&Path>) -> Result<LoadedModel, Failure> {
    if let Some(endpoint) = std::env::var(ENDPOINT_VAR).ok().filter(|e| !e.is_empty()) {
        return RemoteModel::connect(&endpoint)
            .map(LoadedModel::Remote)
            .map_err(|e| diag(format!("{endpoint}: {e}")));
    }
    let path = path.ok_or_else(|| Failure::Usage(format!("--model is required unless {ENDPOINT_VAR} is set")))?;
    load_model(path)
        .map(LoadedModel::Local)
        .map_err(|e| diag(format!("{}: {e}", path.display())))
}

fn small_model(seed: u64) -> Result<ModelHandle, Failure> {
    let spec = ModelSpec {
        num_layers: 3,
        hidden_dim: 16,
        vocab_hash_dim: 256,
        ..ModelSpec::default()
    };
    let examples: Vec<Example> = synth_corpus(120, ClassRule::DivRisk, seed)
        .map_err(diag)?
        .iter()
        .map(|r| Example {
            input: TokenizedInput::from_unit(&parse(&r.source).expect("synthetic sources parse")),
            label: r.label,
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 5,
        probe_epochs: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train_surrogate(&examples, spec, &cfg, seed).map_err(diag)?;
    fit_layer_probes(&model, &examples, &cfg).map_err(diag)
}

/// Serves a built-in model on a loopback port and checks it.
pub fn self_test(path: Option<&Path>, seed: u64) -> Result<ConformanceReport, Failure> {
    let model = match path {
        Some(p) => load_model(p).map_err(|e| diag(format!("{}: {e}", p.display())))?,
        None => small_model(seed)?,
    };
    let listener = TcpListener::bind("127.0.0.1:0").map_err(diag)?;
    let addr = listener.local_addr().map_err(diag)?;
    std::thread::scope(|s| {
        s.spawn(|| serve_tcp(&model, listener, Some(1)));
        check_protocol(&addr.to_string()).map_err(diag)
    })
}
