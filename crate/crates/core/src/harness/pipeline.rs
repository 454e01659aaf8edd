//! The end-to-end experiment: train, calibrate, validate, adapt, re-evaluate.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::minic::{parse, SourceUnit};
use crate::model::{
    fit_layer_probes, train_surrogate, Classifier, Example, ModelHandle, ModelOutput, SubmodelSample,
    TokenizedInput,
};
use crate::search::{adapt, AdaptKind, AdaptOutcome};
use crate::validate::{
    calibrate_threshold, classify_input, dsmg_score, fit_temperature, uncertainty_score, Evidence, MetricId,
    UncertaintyMetricId, Verdict,
};

use super::corpus::{derive_seed, load_corpus, split_indices, synth_corpus, CorpusRecord};
use super::metrics::{auc, cvr_mvr, ClassMetrics};
use super::report::{Counts, CorpusSource, ExperimentConfig, InputRecord, MetricsReport, REPORT_VERSION};
use super::HarnessError;

struct Scored {
    output: ModelOutput,
    samples: Vec<SubmodelSample>,
    score: f64,
}

fn score_all(model: &ModelHandle, inputs: &[TokenizedInput], cfg: &ExperimentConfig) -> Result<Vec<Scored>, HarnessError> {
    let sampler = model.submodel_sampler(cfg.dsmg.k, cfg.dsmg.base_seed);
    inputs
        .par_iter()
        .map(|input| {
            let samples = sampler.sample(input)?;
            let score = dsmg_score(&samples, cfg.dsmg.weights, None)?.combined;
            Ok(Scored {
                output: model.infer(input)?,
                samples,
                score,
            })
        })
        .collect()
}

fn train(
    examples: &[Example],
    cfg: &ExperimentConfig,
    seed: u64,
    probes: bool,
) -> Result<(ModelHandle, f64), HarnessError> {
    let (m, report) = train_surrogate(examples, cfg.model, &cfg.train, seed)?;
    let m = if probes { fit_layer_probes(&m, examples, &cfg.train)? } else { m };
    Ok((m, report.accuracy))
}

/// AUC of each uncertainty baseline on the test split.
fn baseline_aucs(
    cfg: &ExperimentConfig,
    examples: &[Example],
    test: &[Scored],
    test_inputs: &[TokenizedInput],
    correct: &[bool],
    temperature: f64,
) -> Result<BTreeMap<String, Option<f64>>, HarnessError> {
    let mut members = Vec::new();
    for j in 1..cfg.ensemble_size.max(1) {
        members.push(train(examples, cfg, cfg.train_seed.wrapping_add(j as u64), false)?.0);
    }
    let extra: Vec<Vec<ModelOutput>> = test_inputs
        .par_iter()
        .map(|input| members.iter().map(|m| m.infer(input)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let mut out = BTreeMap::new();
    for metric in UncertaintyMetricId::ALL {
        let mut scores = Vec::with_capacity(test.len());
        for (s, others) in test.iter().zip(&extra) {
            let ensemble: Vec<ModelOutput>;
            let evidence = match metric {
                UncertaintyMetricId::PredictiveEntropy
                | UncertaintyMetricId::MutualInformation
                | UncertaintyMetricId::MCDropoutVariance => Evidence::Samples(&s.samples),
                UncertaintyMetricId::DeepEnsemble => {
                    ensemble = std::iter::once(s.output.clone()).chain(others.iter().cloned()).collect();
                    Evidence::Ensemble(&ensemble)
                }
                _ => Evidence::Single(&s.output),
            };
            scores.push(uncertainty_score(metric, evidence, temperature)?.score);
        }
        out.insert(metric.to_string(), auc(&scores, correct).ok());
    }
    Ok(out)
}

fn load(cfg: &ExperimentConfig) -> Result<Vec<CorpusRecord>, HarnessError> {
    match &cfg.corpus {
        CorpusSource::Synthetic { n, seed, rule } => synth_corpus(*n, *rule, *seed),
        CorpusSource::File { path } => load_corpus(path),
    }
}

/// Runs the whole experiment. Failures while adapting single inputs mark the report
/// partial instead of aborting; anything earlier is returned as an error.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    let start = Instant::now();
    let mut errors = Vec::new();
    let records = load(cfg)?;
    let units: Vec<SourceUnit> = records
        .iter()
        .map(|r| {
            parse(&r.source).map_err(|e| HarnessError::UnparseableSource {
                id: r.id.clone(),
                message: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let inputs: Vec<TokenizedInput> = units.iter().map(TokenizedInput::from_unit).collect();
    let split = split_indices(records.len(), &cfg.split)?;
    let examples = |idx: &[usize]| -> Vec<Example> {
        idx.iter()
            .map(|&i| Example {
                input: inputs[i].clone(),
                label: records[i].label,
            })
            .collect()
    };
    let train_set = examples(&split.train);
    let (model, train_accuracy) = train(&train_set, cfg, cfg.train_seed, true)?;

    // calibration
    let cal_inputs: Vec<TokenizedInput> = split.calibrate.iter().map(|&i| inputs[i].clone()).collect();
    let cal = score_all(&model, &cal_inputs, cfg)?;
    let cal_pairs: Vec<(f64, bool)> = cal
        .iter()
        .zip(&split.calibrate)
        .map(|(s, &i)| (s.score, s.output.predicted() == records[i].label))
        .collect();
    let tau = match calibrate_threshold(&cal_pairs, &cfg.threshold) {
        Ok(t) => t,
        Err(e) => {
            errors.push(format!("calibration: {e}; using tau {}", cfg.threshold.tau));
            cfg.threshold.tau
        }
    };
    let temperature = fit_temperature(
        &cal.iter()
            .zip(&split.calibrate)
            .map(|(s, &i)| (s.output.logits.clone(), records[i].label))
            .collect::<Vec<_>>(),
    );

    // baseline evaluation and validation of the test split
    let test_inputs: Vec<TokenizedInput> = split.test.iter().map(|&i| inputs[i].clone()).collect();
    let test = score_all(&model, &test_inputs, cfg)?;
    let labels: Vec<usize> = split.test.iter().map(|&i| records[i].label).collect();
    let predicted: Vec<usize> = test.iter().map(|s| s.output.predicted()).collect();
    let correct: Vec<bool> = predicted.iter().zip(&labels).map(|(p, y)| p == y).collect();
    let verdicts: Vec<_> = test.iter().map(|s| classify_input(s.score, tau, MetricId::Dsmg)).collect();
    let scores: Vec<f64> = test.iter().map(|s| s.score).collect();
    let dsmg_auc = auc(&scores, &correct).ok();
    let rates = cvr_mvr(&verdicts, &correct).ok();
    let uncertainty_auc = if cfg.baselines {
        baseline_aucs(cfg, &train_set, &test, &test_inputs, &correct, temperature)?
    } else {
        BTreeMap::new()
    };

    // adaptation
    let outcomes: Vec<Option<Result<AdaptOutcome, String>>> = split
        .test
        .par_iter()
        .enumerate()
        .map(|(t, &i)| {
            let strategy = cfg.strategy?;
            if verdicts[t].verdict == Verdict::InScope {
                return None;
            }
            let seed = derive_seed(cfg.search_seed, t as u64);
            Some(
                adapt(&units[i], &model, &cfg.dsmg, tau, strategy, &cfg.search, seed)
                    .map_err(|e| format!("{}: {e}", records[i].id)),
            )
        })
        .collect();

    let mut counts = Counts {
        train: split.train.len(),
        calibrate: split.calibrate.len(),
        test: split.test.len(),
        ..Counts::default()
    };
    let mut rows = Vec::with_capacity(split.test.len());
    let mut finals = Vec::with_capacity(split.test.len());
    let (mut applied, mut transform_seconds, mut adapt_seconds) = (0usize, 0.0, 0.0);
    for (t, &i) in split.test.iter().enumerate() {
        let mut row = InputRecord {
            id: records[i].id.clone(),
            label: labels[t],
            predicted: predicted[t],
            score: scores[t],
            verdict: verdicts[t].verdict,
            outcome: None,
            final_prediction: predicted[t],
            adapted_score: None,
            genome: None,
            evaluations: 0,
            error: None,
        };
        counts.mispredicted += usize::from(!correct[t]);
        counts.flagged += usize::from(row.verdict == Verdict::OutOfScope);
        match &outcomes[t] {
            Some(Ok(o)) => {
                row.outcome = Some(o.kind);
                row.adapted_score = Some(o.score);
                row.genome = Some(o.genome.to_string());
                row.evaluations = o.evaluations();
                row.final_prediction = o.prediction;
                if o.kind != AdaptKind::Unchanged {
                    counts.adapted += 1;
                    adapt_seconds += o.wall_seconds;
                }
                counts.refined += usize::from(o.kind == AdaptKind::Refined);
                counts.best_effort += usize::from(o.kind == AdaptKind::BestEffort);
                if let Some(s) = &o.search {
                    applied += s.transforms_applied;
                    transform_seconds += s.transform_seconds;
                }
            }
            Some(Err(e)) => {
                errors.push(e.clone());
                row.error = Some(e.clone());
            }
            None => {}
        }
        let now_right = row.final_prediction == row.label;
        match (correct[t], now_right) {
            (false, true) => counts.corrected += 1,
            (false, false) => counts.still_wrong += 1,
            (true, false) => counts.regressed += 1,
            (true, true) => counts.still_correct += 1,
        }
        finals.push(row.final_prediction);
        rows.push(row);
    }
    let fraction = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let baseline = ClassMetrics::compute(&predicted, &labels)?;
    let adapted = ClassMetrics::compute(&finals, &labels)?;
    Ok(MetricsReport {
        version: REPORT_VERSION.to_string(),
        config: cfg.clone(),
        partial: !errors.is_empty(),
        errors,
        surrogate_train_accuracy: train_accuracy,
        baseline,
        adapted,
        tau,
        temperature,
        auc: dsmg_auc,
        cvr: rates.map(|r| r.0),
        mvr: rates.map(|r| r.1),
        uncertainty_auc,
        corrected_fraction: fraction(counts.corrected, counts.mispredicted),
        regressed_fraction: fraction(counts.regressed, counts.test - counts.mispredicted),
        transforms_applied: applied,
        tps: if transform_seconds > 0.0 { applied as f64 / transform_seconds } else { 0.0 },
        mean_adapt_seconds: if counts.adapted > 0 { adapt_seconds / counts.adapted as f64 } else { 0.0 },
        wall_seconds: start.elapsed().as_secs_f64(),
        counts,
        inputs: rows,
    })
}
