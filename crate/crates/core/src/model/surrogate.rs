//! The built-in surrogate encoder and its trainer.
//!
//! Every token is embedded, pushed through the same rectifier layers, and each layer's
//! activations are mean-pooled into a snapshot. Layers act position-wise, so the
//! forward pass runs once per distinct token, weighted by its frequency.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, softmax, Classifier, ModelError, ModelOutput, ModelSpec, SubmodelSample,
    SubmodelSampler, TokenizedInput,
};

/// A labelled training input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: TokenizedInput,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub probe_epochs: usize,
    pub probe_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.003,
            probe_epochs: 40,
            probe_learning_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub accuracy: f64,
    pub final_loss: f64,
}

/// `out = w * x + b`, with `w` stored row-major as `out x inp`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub(crate) fn zeros(inp: usize, out: usize) -> Dense {
        Dense {
            inp,
            out,
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
        }
    }

    fn uniform(inp: usize, out: usize, limit: f64, rng: &mut ChaCha8Rng) -> Dense {
        let mut d = Dense::zeros(inp, out);
        for w in &mut d.w {
            *w = rng.gen_range(-limit..limit);
        }
        d
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns d/dx.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            let grow = &mut grad.w[o * self.inp..(o + 1) * self.inp];
            for i in 0..self.inp {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    pub embedding: Vec<f64>,
    pub layers: Vec<Dense>,
    pub head: Dense,
}

impl Params {
    fn zeros_like(&self) -> Params {
        Params {
            embedding: vec![0.0; self.embedding.len()],
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inp, l.out))
                .collect(),
            head: Dense::zeros(self.head.inp, self.head.out),
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.embedding];
        for l in &self.layers {
            v.push(&l.w);
            v.push(&l.b);
        }
        v.push(&self.head.w);
        v.push(&self.head.b);
        v
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.embedding];
        for l in &mut self.layers {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v.push(&mut self.head.w);
        v.push(&mut self.head.b);
        v
    }
}

/// Trained surrogate weights plus the spec and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHandle {
    pub spec: ModelSpec,
    pub train_seed: u64,
    pub(crate) params: Params,
    pub(crate) probes: Option<Vec<Dense>>,
}

/// Distinct hashed tokens with their relative frequency.
pub(crate) struct Bag {
    items: Vec<(usize, f64)>,
}

impl Bag {
    pub(crate) fn new(input: &TokenizedInput, dim: usize) -> Result<Bag, ModelError> {
        if input.is_empty() {
            return Err(ModelError::EmptyTokenList);
        }
        let mut idx = input.indices(dim);
        idx.sort_unstable();
        let n = idx.len() as f64;
        let mut items: Vec<(usize, f64)> = Vec::new();
        for i in idx {
            match items.last_mut() {
                Some((last, c)) if *last == i => *c += 1.0,
                _ => items.push((i, 1.0)),
            }
        }
        for (_, c) in &mut items {
            *c /= n;
        }
        Ok(Bag { items })
    }
}

/// Activations of every distinct token at every depth (depth 0 is the embedding).
struct Trace {
    acts: Vec<Vec<Vec<f64>>>,
    snapshots: Vec<Vec<f64>>,
}

impl ModelHandle {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn has_probes(&self) -> bool {
        self.probes.is_some()
    }

    pub(crate) fn init(spec: ModelSpec, seed: u64) -> Result<ModelHandle, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = spec.hidden_dim;
        let embedding = (0..spec.vocab_hash_dim * h)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let he = (6.0 / h as f64).sqrt();
        let layers = (0..spec.num_layers)
            .map(|_| Dense::uniform(h, h, he, &mut rng))
            .collect();
        let glorot = (6.0 / (h + spec.num_classes) as f64).sqrt();
        let head = Dense::uniform(h, spec.num_classes, glorot, &mut rng);
        Ok(ModelHandle {
            spec,
            train_seed: seed,
            params: Params {
                embedding,
                layers,
                head,
            },
            probes: None,
        })
    }

    fn embed(&self, idx: usize) -> &[f64] {
        let h = self.spec.hidden_dim;
        &self.params.embedding[idx * h..(idx + 1) * h]
    }

    fn trace(&self, bag: &Bag, masks: Option<&[Vec<f64>]>) -> Trace {
        let h = self.spec.hidden_dim;
        let mut acts = vec![bag
            .items
            .iter()
            .map(|&(i, _)| self.embed(i).to_vec())
            .collect::<Vec<_>>()];
        let mut snapshots = Vec::with_capacity(self.spec.num_layers);
        for (l, layer) in self.params.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let mut snap = vec![0.0; h];
            let next: Vec<Vec<f64>> = prev
                .iter()
                .zip(&bag.items)
                .map(|(x, &(_, weight))| {
                    let mut y = layer.apply(x);
                    for (j, v) in y.iter_mut().enumerate() {
                        *v = v.max(0.0);
                        if let Some(m) = masks {
                            *v *= m[l][j];
                        }
                        snap[j] += weight * *v;
                    }
                    y
                })
                .collect();
            acts.push(next);
            snapshots.push(snap);
        }
        Trace { acts, snapshots }
    }

    fn output(&self, trace: Trace) -> ModelOutput {
        let logits = self.params.head.apply(trace.snapshots.last().unwrap());
        let probs = softmax(&logits);
        let probe_logits = match &self.probes {
            Some(p) => p
                .iter()
                .zip(&trace.snapshots)
                .map(|(d, s)| d.apply(s))
                .collect(),
            None => Vec::new(),
        };
        ModelOutput {
            logits,
            probs,
            layer_snapshots: trace.snapshots,
            probe_logits,
        }
    }

    pub fn infer(&self, input: &TokenizedInput) -> Result<ModelOutput, ModelError> {
        let bag = Bag::new(input, self.spec.vocab_hash_dim)?;
        Ok(self.output(self.trace(&bag, None)))
    }

    /// Per-layer keep/zero masks for one sub-model, with inverted scaling.
    pub(crate) fn dropout_masks(&self, seed: u64) -> Vec<Vec<f64>> {
        let p = self.spec.dropout_rate;
        let keep = 1.0 / (1.0 - p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.spec.num_layers)
            .map(|_| {
                (0..self.spec.hidden_dim)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect()
            })
            .collect()
    }

    pub fn infer_submodels(
        &self,
        input: &TokenizedInput,
        k: usize,
        base_seed: u64,
    ) -> Result<Vec<SubmodelSample>, ModelError> {
        if k < 2 {
            return Err(ModelError::KTooSmall(k));
        }
        let bag = Bag::new(input, self.spec.vocab_hash_dim)?;
        Ok((0..k as u64)
            .map(|i| {
                let seed = base_seed.wrapping_add(i);
                let trace = if self.spec.dropout_rate == 0.0 {
                    self.trace(&bag, None)
                } else {
                    self.trace(&bag, Some(&self.dropout_masks(seed)))
                };
                SubmodelSample {
                    dropout_seed: seed,
                    output: self.output(trace),
                }
            })
            .collect())
    }

    /// A copy with a different inference-time dropout rate.
    pub fn with_dropout_rate(&self, p: f64) -> Result<ModelHandle, ModelError> {
        let mut out = self.clone();
        out.spec.dropout_rate = p;
        out.spec.validate()?;
        Ok(out)
    }

    pub fn accuracy(&self, corpus: &[Example]) -> Result<f64, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut hits = 0usize;
        for ex in corpus {
            if self.infer(&ex.input)?.predicted() == ex.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / corpus.len() as f64)
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub(crate) fn loss_and_grad(&self, batch: &[(Bag, usize)]) -> (f64, Params) {
        let mut grad = self.params.zeros_like();
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        let h = self.spec.hidden_dim;
        for (bag, label) in batch {
            let trace = self.trace(bag, None);
            let top = trace.snapshots.last().unwrap();
            let probs = softmax(&self.params.head.apply(top));
            loss -= probs[*label].max(1e-300).ln() * scale;
            let mut dlogits = probs;
            dlogits[*label] -= 1.0;
            for d in &mut dlogits {
                *d *= scale;
            }
            let dsnap = self.params.head.backward(top, &dlogits, &mut grad.head);
            for (u, &(idx, weight)) in bag.items.iter().enumerate() {
                let mut dh: Vec<f64> = dsnap.iter().map(|d| d * weight).collect();
                for l in (0..self.spec.num_layers).rev() {
                    let out = &trace.acts[l + 1][u];
                    for (d, &a) in dh.iter_mut().zip(out) {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    dh = self.params.layers[l].backward(&trace.acts[l][u], &dh, &mut grad.layers[l]);
                }
                for (g, d) in grad.embedding[idx * h..(idx + 1) * h].iter_mut().zip(&dh) {
                    *g += d;
                }
            }
        }
        (loss, grad)
    }

    /// Mean cross-entropy alone.
    pub(crate) fn loss(&self, batch: &[(Bag, usize)]) -> f64 {
        batch
            .iter()
            .map(|(bag, label)| {
                let trace = self.trace(bag, None);
                let probs = softmax(&self.params.head.apply(trace.snapshots.last().unwrap()));
                -probs[*label].max(1e-300).ln()
            })
            .sum::<f64>()
            / batch.len() as f64
    }
}

impl Classifier for ModelHandle {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }
    fn num_layers(&self) -> usize {
        self.spec.num_layers
    }
    fn dropout_rate(&self) -> f64 {
        self.spec.dropout_rate
    }
    fn infer(&self, input: &TokenizedInput) -> Result<ModelOutput, ModelError> {
        ModelHandle::infer(self, input)
    }
    fn infer_submodels(
        &self,
        input: &TokenizedInput,
        k: usize,
        base_seed: u64,
    ) -> Result<Vec<SubmodelSample>, ModelError> {
        ModelHandle::infer_submodels(self, input, k, base_seed)
    }
    fn submodel_sampler<'a>(&'a self, k: usize, base_seed: u64) -> Box<dyn SubmodelSampler + 'a> {
        Box::new(CachedSampler::new(self, k, base_seed))
    }
}

/// Remembers every token's masked activations per sub-model. Layers act on
/// each token separately, so these never change for a fixed mask set.
struct CachedSampler<'a> {
    model: &'a ModelHandle,
    k: usize,
    base_seed: u64,
    masks: Option<Vec<Vec<Vec<f64>>>>,
    /// token index -> [sub-model][layer] activations
    acts: Mutex<HashMap<usize, Arc<Vec<Vec<Vec<f64>>>>>>,
}

impl<'a> CachedSampler<'a> {
    fn new(model: &'a ModelHandle, k: usize, base_seed: u64) -> Self {
        let masks = (model.spec.dropout_rate != 0.0).then(|| {
            (0..k as u64)
                .map(|i| model.dropout_masks(base_seed.wrapping_add(i)))
                .collect()
        });
        CachedSampler {
            model,
            k,
            base_seed,
            masks,
            acts: Mutex::new(HashMap::new()),
        }
    }

    fn token(&self, idx: usize) -> Arc<Vec<Vec<Vec<f64>>>> {
        if let Some(hit) = self.acts.lock().unwrap().get(&idx) {
            return Arc::clone(hit);
        }
        let per_model = (0..self.k)
            .map(|i| {
                let mask = self.masks.as_ref().map(|m| &m[i]);
                let mut x = self.model.embed(idx).to_vec();
                let mut out = Vec::with_capacity(self.model.spec.num_layers);
                for (l, layer) in self.model.params.layers.iter().enumerate() {
                    let mut y = layer.apply(&x);
                    for (j, v) in y.iter_mut().enumerate() {
                        *v = v.max(0.0);
                        if let Some(m) = mask {
                            *v *= m[l][j];
                        }
                    }
                    out.push(y.clone());
                    x = y;
                }
                out
            })
            .collect();
        let entry = Arc::new(per_model);
        self.acts.lock().unwrap().insert(idx, Arc::clone(&entry));
        entry
    }
}

impl SubmodelSampler for CachedSampler<'_> {
    fn sample(&self, input: &TokenizedInput) -> Result<Vec<SubmodelSample>, ModelError> {
        if self.k < 2 {
            return Err(ModelError::KTooSmall(self.k));
        }
        let bag = Bag::new(input, self.model.spec.vocab_hash_dim)?;
        let tokens: Vec<_> = bag.items.iter().map(|&(i, _)| self.token(i)).collect();
        let h = self.model.spec.hidden_dim;
        Ok((0..self.k)
            .map(|i| {
                let snapshots = (0..self.model.spec.num_layers)
                    .map(|l| {
                        let mut snap = vec![0.0; h];
                        for (t, &(_, weight)) in tokens.iter().zip(&bag.items) {
                            for (s, v) in snap.iter_mut().zip(&t[i][l]) {
                                *s += weight * v;
                            }
                        }
                        snap
                    })
                    .collect();
                SubmodelSample {
                    dropout_seed: self.base_seed.wrapping_add(i as u64),
                    output: self.model.output(Trace {
                        acts: Vec::new(),
                        snapshots,
                    }),
                }
            })
            .collect())
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[&[f64]], lr: f64) -> Adam {
        Adam {
            m: shapes.iter().map(|s| vec![0.0; s.len()]).collect(),
            v: shapes.iter().map(|s| vec![0.0; s.len()]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn check_labels(corpus: &[Example], classes: usize) -> Result<(), ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    match corpus.iter().find(|e| e.label >= classes) {
        Some(e) => Err(ModelError::LabelOutOfRange {
            label: e.label,
            classes,
        }),
        None => Ok(()),
    }
}

/// Mini-batch Adam on cross-entropy. Deterministic in corpus order, spec, config and seed.
pub fn train_surrogate(
    corpus: &[Example],
    spec: ModelSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelHandle, TrainReport), ModelError> {
    check_labels(corpus, spec.num_classes)?;
    let mut model = ModelHandle::init(spec, seed)?;
    let mut data = corpus
        .iter()
        .map(|e| Ok((Bag::new(&e.input, spec.vocab_hash_dim)?, e.label)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a1e);
    let mut adam = Adam::new(&model.params.slices(), cfg.learning_rate);
    let mut final_loss = 0.0;
    for _ in 0..cfg.epochs {
        data.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in data.chunks(cfg.batch_size.max(1)) {
            let (loss, grad) = model.loss_and_grad(batch);
            epoch_loss += loss * batch.len() as f64;
            adam.step(model.params.slices_mut(), grad.slices());
        }
        final_loss = epoch_loss / data.len() as f64;
    }
    let accuracy = model.accuracy(corpus)?;
    Ok((
        model,
        TrainReport {
            accuracy,
            final_loss,
        },
    ))
}

/// Fits one softmax-regression probe per layer on frozen snapshots.
pub fn fit_layer_probes(
    handle: &ModelHandle,
    corpus: &[Example],
    cfg: &TrainConfig,
) -> Result<ModelHandle, ModelError> {
    check_labels(corpus, handle.spec.num_classes)?;
    let (h, c) = (handle.spec.hidden_dim, handle.spec.num_classes);
    let mut snaps = Vec::with_capacity(corpus.len());
    for ex in corpus {
        let bag = Bag::new(&ex.input, handle.spec.vocab_hash_dim)?;
        snaps.push((handle.trace(&bag, None).snapshots, ex.label));
    }
    let mut probes = Vec::with_capacity(handle.spec.num_layers);
    for layer in 0..handle.spec.num_layers {
        let mut rng = ChaCha8Rng::seed_from_u64(handle.train_seed ^ (0x9b0b_e5 + layer as u64));
        let mut probe = Dense::zeros(h, c);
        let mut adam = Adam::new(&[&probe.w, &probe.b], cfg.probe_learning_rate);
        let mut order: Vec<usize> = (0..snaps.len()).collect();
        for _ in 0..cfg.probe_epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let mut grad = Dense::zeros(h, c);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (s, label) = (&snaps[i].0[layer], snaps[i].1);
                    let mut d = softmax(&probe.apply(s));
                    d[label] -= 1.0;
                    d.iter_mut().for_each(|x| *x *= scale);
                    probe.backward(s, &d, &mut grad);
                }
                adam.step(vec![&mut probe.w, &mut probe.b], vec![&grad.w, &grad.b]);
            }
        }
        probes.push(probe);
    }
    let mut out = handle.clone();
    out.probes = Some(probes);
    Ok(out)
}

/// Compares backpropagated gradients of the mean cross-entropy on `corpus` with
/// central differences of half-width `step`, at `per_block` random coordinates of
/// every parameter block (embedding coordinates are drawn from rows the corpus
/// touches). Returns the worst relative error `|a - n| / (|a| + |n|)` per block.
pub fn gradient_check(
    handle: &ModelHandle,
    corpus: &[Example],
    per_block: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    check_labels(corpus, handle.spec.num_classes)?;
    let batch = corpus
        .iter()
        .map(|e| Ok((Bag::new(&e.input, handle.spec.vocab_hash_dim)?, e.label)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut model = handle.clone();
    let (_, grad) = model.loss_and_grad(&batch);
    let grads: Vec<Vec<f64>> = grad.slices().iter().map(|s| s.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Vec::with_capacity(grads.len());
    for (block, g) in grads.iter().enumerate() {
        let candidates: Vec<usize> = (0..g.len()).filter(|&i| block > 0 || g[i] != 0.0).collect();
        let mut w: f64 = 0.0;
        if candidates.is_empty() {
            worst.push(w);
            continue;
        }
        for _ in 0..per_block {
            let i = candidates[rng.gen_range(0..candidates.len())];
            let orig = model.params.slices()[block][i];
            model.params.slices_mut()[block][i] = orig + step;
            let up = model.loss(&batch);
            model.params.slices_mut()[block][i] = orig - step;
            let down = model.loss(&batch);
            model.params.slices_mut()[block][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = (g[i].abs() + numeric.abs()).max(1e-12);
            w = w.max((g[i] - numeric).abs() / denom);
        }
        worst.push(w);
    }
    Ok(worst)
}

/// Accuracy of each layer probe on `corpus`.
pub fn probe_accuracies(handle: &ModelHandle, corpus: &[Example]) -> Result<Vec<f64>, ModelError> {
    let probes = handle.probes.as_ref().ok_or(ModelError::MissingProbes)?;
    let mut hits = vec![0usize; probes.len()];
    for ex in corpus {
        let out = handle.infer(&ex.input)?;
        for (l, logits) in out.probe_logits.iter().enumerate() {
            if argmax(logits) == ex.label {
                hits[l] += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| h as f64 / corpus.len().max(1) as f64)
        .collect())
}
