use super::*;
use crate::minic::gen::{random_unit, GenConfig};
use crate::model::{fit_layer_probes, train_surrogate, Example, ModelHandle, ModelOutput, ModelSpec, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn output(logits: Vec<f64>, probe_logits: Vec<Vec<f64>>) -> ModelOutput {
    let probs = softmax_with_temperature(&logits, 1.0).unwrap();
    ModelOutput {
        logits,
        probs,
        layer_snapshots: vec![],
        probe_logits,
    }
}

fn with_probs(probs: Vec<f64>, probe_logits: Vec<Vec<f64>>) -> SubmodelSample {
    SubmodelSample {
        dropout_seed: 0,
        output: ModelOutput {
            logits: probs.iter().map(|p| p.max(1e-300).ln()).collect(),
            probs,
            layer_snapshots: vec![],
            probe_logits,
        },
    }
}

fn small_model(dropout_rate: f64) -> (ModelHandle, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let corpus: Vec<Example> = (0..80)
        .map(|_| {
            let input = TokenizedInput::from_unit(&random_unit(&mut rng, &GenConfig::default()));
            let label = usize::from(input.tokens.iter().any(|t| t == "/" || t == "/="));
            Example { input, label }
        })
        .collect();
    let spec = ModelSpec {
        num_layers: 3,
        hidden_dim: 16,
        num_classes: 2,
        vocab_hash_dim: 256,
        dropout_rate,
    };
    let (m, _) = train_surrogate(&corpus, spec, &TrainConfig::default(), 2).unwrap();
    (fit_layer_probes(&m, &corpus, &TrainConfig::default()).unwrap(), corpus)
}

/// Both DSMG formulas written out again with plain index loops.
fn dsmg_oracle(samples: &[SubmodelSample], w_var: f64, w_dist: f64) -> (f64, f64, f64) {
    let k = samples.len();
    let c = samples[0].output.probs.len();
    let l = samples[0].output.probe_logits.len();
    let mut mean = vec![0.0; c];
    for i in 0..k {
        for j in 0..c {
            mean[j] += samples[i].output.probs[j] / k as f64;
        }
    }
    let mut total_var = 0.0;
    for j in 0..c {
        let mut mu = 0.0;
        for i in 0..k {
            mu += samples[i].output.probs[j];
        }
        mu /= k as f64;
        let mut v = 0.0;
        for i in 0..k {
            let d = samples[i].output.probs[j] - mu;
            v += d * d;
        }
        total_var += v / k as f64;
    }
    let var_term = total_var / c as f64 / 0.25;
    let mut yhat = 0;
    for j in 1..c {
        if mean[j] > mean[yhat] {
            yhat = j;
        }
    }
    let denom = (l * (l + 1)) as f64 / 2.0;
    let mut dist = 0.0;
    for i in 0..k {
        let mut d = 0.0;
        for layer in 0..l {
            let z = &samples[i].output.probe_logits[layer];
            let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = z.iter().map(|x| (x - top).exp()).sum();
            let p = (z[yhat] - top).exp() / norm;
            d += (layer + 1) as f64 / denom * (1.0 - p);
        }
        dist += d;
    }
    let dist_term = dist / k as f64;
    (var_term, dist_term, w_var * (1.0 - var_term) + w_dist * (1.0 - dist_term))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn dsmg_perfect_consistency() {
    let s = with_probs(vec![0.0, 1.0], vec![vec![-800.0, 800.0]; 3]);
    let score = dsmg_score(&vec![s; 4], DsmgWeights::default(), None).unwrap();
    assert_eq!(score.variance_term, 0.0);
    assert!(score.distance_term.abs() <= 1e-12);
    assert!(close(score.combined, 1.0, 1e-12));
    assert_eq!(score.predicted, 1);
}

#[test]
fn dsmg_maximal_disagreement() {
    let probes = vec![vec![0.0, 0.0]; 2];
    let samples = vec![
        with_probs(vec![1.0, 0.0], probes.clone()),
        with_probs(vec![0.0, 1.0], probes),
    ];
    let score = dsmg_score(&samples, DsmgWeights::default(), None).unwrap();
    assert!(close(score.variance_term, 1.0, 1e-12));
    assert!(close(score.distance_term, 0.5, 1e-12));
}

#[test]
fn dsmg_errors() {
    let s = with_probs(vec![0.5, 0.5], vec![vec![0.0, 0.0]]);
    assert_eq!(
        dsmg_score(&[s.clone()], DsmgWeights::default(), None).unwrap_err(),
        ValidateError::TooFewSamples(1)
    );
    let odd = with_probs(vec![0.2, 0.3, 0.5], vec![vec![0.0, 0.0, 0.0]]);
    assert!(matches!(
        dsmg_score(&[s.clone(), odd], DsmgWeights::default(), None),
        Err(ValidateError::ShapeMismatch(_))
    ));
    let bare = with_probs(vec![0.5, 0.5], vec![]);
    assert_eq!(
        dsmg_score(&[bare.clone(), bare], DsmgWeights::default(), None).unwrap_err(),
        ValidateError::Model(ModelError::MissingProbes)
    );
    let bad = DsmgWeights { w_var: 0.7, w_dist: 0.7 };
    assert!(matches!(
        dsmg_score(&[s.clone(), s.clone()], bad, None),
        Err(ValidateError::InvalidWeights(_))
    ));
    assert!(matches!(
        dsmg_score(&[s.clone(), s], DsmgWeights::default(), Some(&[0.5, 0.5])),
        Err(ValidateError::ShapeMismatch(_))
    ));
}

#[test]
fn layer_weights_are_linear() {
    let w = linear_layer_weights(4);
    assert_eq!(w, vec![0.1, 0.2, 0.3, 0.4]);
    assert!(close(linear_layer_weights(7).iter().sum(), 1.0, 1e-12));
}

#[test]
fn dsmg_matches_oracle_on_model_fixtures() {
    let (m, corpus) = small_model(0.1);
    let cfg = DsmgConfig::default();
    assert_eq!((cfg.k, m.spec.dropout_rate), (30, 0.1));
    for ex in corpus.iter().take(50) {
        let samples = m.infer_submodels(&ex.input, cfg.k, cfg.base_seed).unwrap();
        let got = validity(&m, &ex.input, &cfg).unwrap();
        let (v, d, c) = dsmg_oracle(&samples, 0.5, 0.5);
        assert!(close(got.variance_term, v, 1e-12), "{} vs {v}", got.variance_term);
        assert!(close(got.distance_term, d, 1e-12), "{} vs {d}", got.distance_term);
        assert!(close(got.combined, c, 1e-12), "{} vs {c}", got.combined);
    }
}

#[test]
fn no_dropout_means_no_variance() {
    let (m, corpus) = small_model(0.0);
    for ex in corpus.iter().take(10) {
        let s = validity(&m, &ex.input, &DsmgConfig::default()).unwrap();
        assert_eq!(s.variance_term, 0.0);
    }
}

fn random_samples(rng: &mut ChaCha8Rng, k: usize, c: usize, l: usize) -> Vec<SubmodelSample> {
    (0..k)
        .map(|i| {
            let logits: Vec<f64> = (0..c).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let probes = (0..l)
                .map(|_| (0..c).map(|_| rng.gen_range(-4.0..4.0)).collect())
                .collect();
            SubmodelSample {
                dropout_seed: i as u64,
                output: output(logits, probes),
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn dsmg_matches_oracle_on_random_samples(seed in any::<u64>(), k in 2usize..12, c in 2usize..5, l in 1usize..5, w in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, k, c, l);
        let weights = DsmgWeights { w_var: w, w_dist: 1.0 - w };
        let got = dsmg_score(&samples, weights, None).unwrap();
        let (v, d, comb) = dsmg_oracle(&samples, w, 1.0 - w);
        prop_assert!(close(got.variance_term, v, 1e-12));
        prop_assert!(close(got.distance_term, d, 1e-12));
        prop_assert!(close(got.combined, comb, 1e-12));
        prop_assert!((0.0..=1.0).contains(&got.combined));
    }

    #[test]
    fn dsmg_is_permutation_invariant(seed in any::<u64>(), k in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, k, 3, 3);
        let mut shuffled = samples.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = dsmg_score(&samples, DsmgWeights::default(), None).unwrap();
        let b = dsmg_score(&shuffled, DsmgWeights::default(), None).unwrap();
        prop_assert!(close(a.variance_term, b.variance_term, 1e-12));
        prop_assert!(close(a.distance_term, b.distance_term, 1e-12));
        prop_assert!(close(a.combined, b.combined, 1e-12));
        prop_assert_eq!(a.predicted, b.predicted);
    }

    #[test]
    fn variance_zero_iff_identical(seed in any::<u64>(), k in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_samples(&mut rng, 1, 3, 2).remove(0);
        let same = vec![base.clone(); k];
        prop_assert!(dsmg_score(&same, DsmgWeights::default(), None).unwrap().variance_term <= 1e-12);
        let mut varied = same;
        let mut other = base;
        other.output.probs[0] += 0.01;
        other.output.probs[1] -= 0.01;
        varied[k - 1] = other;
        prop_assert!(dsmg_score(&varied, DsmgWeights::default(), None).unwrap().variance_term > 1e-12);
    }

    #[test]
    fn distance_zero_iff_probes_certain(seed in any::<u64>(), k in 2usize..8, l in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = random_samples(&mut rng, k, 3, l);
        let y = argmax(&mean_probs(&samples));
        for s in &mut samples {
            for z in &mut s.output.probe_logits {
                for (j, v) in z.iter_mut().enumerate() {
                    *v = if j == y { 1000.0 } else { -1000.0 };
                }
            }
        }
        prop_assert!(dsmg_score(&samples, DsmgWeights::default(), None).unwrap().distance_term <= 1e-12);
        let layer = rng.gen_range(0..l);
        samples[0].output.probe_logits[layer][y] = 0.0;
        samples[0].output.probe_logits[layer][(y + 1) % 3] = 0.0;
        prop_assert!(dsmg_score(&samples, DsmgWeights::default(), None).unwrap().distance_term > 1e-12);
    }
}

fn one_hot_mix(p: &[f64], y: usize, alpha: f64) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(j, &x)| (1.0 - alpha) * x + if j == y { alpha } else { 0.0 })
        .collect()
}

fn mix_samples(samples: &[SubmodelSample], y: usize, alpha: f64) -> Vec<SubmodelSample> {
    samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.output.probs = one_hot_mix(&s.output.probs, y, alpha);
            s
        })
        .collect()
}

const SINGLE: [UncertaintyMetricId; 6] = [
    UncertaintyMetricId::Vanilla,
    UncertaintyMetricId::TemperatureScaled,
    UncertaintyMetricId::Entropy,
    UncertaintyMetricId::LeastConfidence,
    UncertaintyMetricId::RatioConfidence,
    UncertaintyMetricId::MarginConfidence,
];

const SAMPLED: [UncertaintyMetricId; 3] = [
    UncertaintyMetricId::PredictiveEntropy,
    UncertaintyMetricId::MutualInformation,
    UncertaintyMetricId::MCDropoutVariance,
];

proptest! {
    #[test]
    fn single_output_metrics_respect_orientation(
        logits in prop::collection::vec(-5.0f64..5.0, 2..6),
        shift in 0.0f64..4.0,
        t in prop::sample::select(TEMPERATURE_GRID.to_vec()),
    ) {
        let before = output(logits.clone(), vec![]);
        let y = before.predicted();
        let mut sharper = logits;
        sharper[y] += shift;
        let after = output(sharper, vec![]);
        prop_assert_eq!(after.predicted(), y);
        for m in SINGLE {
            let a = uncertainty_score(m, Evidence::Single(&before), t).unwrap().score;
            let b = uncertainty_score(m, Evidence::Single(&after), t).unwrap().score;
            prop_assert!(b >= a - 1e-12, "{} went from {} to {}", m, a, b);
        }
    }

    #[test]
    fn sample_metrics_respect_orientation(seed in any::<u64>(), k in 2usize..10, c in 2usize..5, alpha in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, k, c, 1);
        let y = argmax(&mean_probs(&samples));
        let sharper = mix_samples(&samples, y, alpha);
        for m in SAMPLED {
            let a = uncertainty_score(m, Evidence::Samples(&samples), 1.0).unwrap().score;
            let b = uncertainty_score(m, Evidence::Samples(&sharper), 1.0).unwrap().score;
            prop_assert!(b >= a - 1e-12, "{} went from {} to {}", m, a, b);
        }
        let members: Vec<ModelOutput> = samples.iter().map(|s| s.output.clone()).collect();
        let sharper_members: Vec<ModelOutput> = sharper.iter().map(|s| s.output.clone()).collect();
        let a = uncertainty_score(UncertaintyMetricId::DeepEnsemble, Evidence::Ensemble(&members), 1.0).unwrap().score;
        let b = uncertainty_score(UncertaintyMetricId::DeepEnsemble, Evidence::Ensemble(&sharper_members), 1.0).unwrap().score;
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn dsmg_respects_orientation(seed in any::<u64>(), k in 2usize..10, alpha in 0.0f64..1.0, shift in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, k, 3, 3);
        let y = argmax(&mean_probs(&samples));
        let mut sharper = mix_samples(&samples, y, alpha);
        for s in &mut sharper {
            for z in &mut s.output.probe_logits {
                z[y] += shift;
            }
        }
        let a = dsmg_score(&samples, DsmgWeights::default(), None).unwrap();
        let b = dsmg_score(&sharper, DsmgWeights::default(), None).unwrap();
        prop_assert_eq!(b.predicted, y);
        prop_assert!(b.combined >= a.combined - 1e-12);
    }
}

#[test]
fn metric_identities() {
    let uniform = ModelOutput {
        logits: vec![0.0, 0.0],
        probs: vec![0.5, 0.5],
        layer_snapshots: vec![],
        probe_logits: vec![],
    };
    let h = uncertainty_score(UncertaintyMetricId::Entropy, Evidence::Single(&uniform), 1.0).unwrap();
    assert!(close(h.raw, std::f64::consts::LN_2, 1e-12));
    assert!(close(h.score, 0.0, 1e-12));
    assert!(close(entropy(&[0.5, 0.5]), std::f64::consts::LN_2, 1e-12));

    let p = ModelOutput {
        logits: vec![0.9f64.ln(), 0.1f64.ln()],
        probs: vec![0.9, 0.1],
        layer_snapshots: vec![],
        probe_logits: vec![],
    };
    let margin = uncertainty_score(UncertaintyMetricId::MarginConfidence, Evidence::Single(&p), 1.0).unwrap();
    assert!(close(margin.score, 0.8, 1e-12));
    let ratio = uncertainty_score(UncertaintyMetricId::RatioConfidence, Evidence::Single(&p), 1.0).unwrap();
    assert!(close(ratio.score, 1.0 - 1.0 / 9.0, 1e-12));
    let lc = uncertainty_score(UncertaintyMetricId::LeastConfidence, Evidence::Single(&p), 1.0).unwrap();
    assert!(close(lc.score, 0.9, 1e-12));
    assert!(close(lc.raw, 0.1, 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = random_samples(&mut rng, 1, 4, 1).remove(0);
    let same = vec![one; 6];
    let mi = uncertainty_score(UncertaintyMetricId::MutualInformation, Evidence::Samples(&same), 1.0).unwrap();
    assert!(mi.raw.abs() <= 1e-12);
    let var = uncertainty_score(UncertaintyMetricId::MCDropoutVariance, Evidence::Samples(&same), 1.0).unwrap();
    assert!(var.raw.abs() <= 1e-12);
}

proptest! {
    #[test]
    fn unit_temperature_is_vanilla(logits in prop::collection::vec(-20.0f64..20.0, 2..8)) {
        let o = output(logits, vec![]);
        let v = uncertainty_score(UncertaintyMetricId::Vanilla, Evidence::Single(&o), 1.0).unwrap();
        let t = uncertainty_score(UncertaintyMetricId::TemperatureScaled, Evidence::Single(&o), 1.0).unwrap();
        prop_assert!(close(v.score, t.score, 1e-12));
    }
}

#[test]
fn evidence_kind_is_checked() {
    let o = output(vec![0.0, 1.0], vec![]);
    for m in SAMPLED {
        assert_eq!(
            uncertainty_score(m, Evidence::Single(&o), 1.0).unwrap_err(),
            ValidateError::WrongEvidenceKind { metric: m }
        );
    }
    let members = [o.clone()];
    assert!(uncertainty_score(UncertaintyMetricId::Vanilla, Evidence::Ensemble(&members), 1.0).is_err());
    assert!(matches!(
        uncertainty_score(UncertaintyMetricId::TemperatureScaled, Evidence::Single(&o), 0.0),
        Err(ValidateError::Model(ModelError::NonpositiveTemperature(_)))
    ));
}

#[test]
fn metric_names_round_trip() {
    for m in UncertaintyMetricId::ALL {
        assert_eq!(m.to_string().parse::<UncertaintyMetricId>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, format!("\"{m}\""));
        assert_eq!(MetricId::Uncertainty(m).to_string().parse::<MetricId>().unwrap(), MetricId::Uncertainty(m));
    }
    assert_eq!("DSMG".parse::<MetricId>().unwrap(), MetricId::Dsmg);
    assert_eq!("mc-dropout-variance".parse::<UncertaintyMetricId>().unwrap(), UncertaintyMetricId::MCDropoutVariance);
    assert!("softmax".parse::<MetricId>().is_err());
}

#[test]
fn temperature_fit() {
    assert_eq!(fit_temperature(&[]), 1.0);
    // confidently wrong half the time: flatter is better
    let over: Vec<(Vec<f64>, usize)> = (0..20).map(|i| (vec![4.0, 0.0], i % 2)).collect();
    assert_eq!(fit_temperature(&over), 5.0);
    // always right: sharper is better
    let under: Vec<(Vec<f64>, usize)> = (0..20).map(|_| (vec![1.0, 0.0], 0)).collect();
    assert_eq!(fit_temperature(&under), 0.5);
}

#[test]
fn verdict_boundaries() {
    let m = MetricId::Dsmg;
    assert_eq!(classify_input(0.9, 0.5, m).verdict, Verdict::InScope);
    assert_eq!(classify_input(0.5, 0.5, m).verdict, Verdict::InScope);
    assert_eq!(classify_input(0.49, 0.5, m).verdict, Verdict::OutOfScope);
}

fn labelled(correct: &[f64], incorrect: &[f64]) -> Vec<(f64, bool)> {
    correct
        .iter()
        .map(|&s| (s, true))
        .chain(incorrect.iter().map(|&s| (s, false)))
        .collect()
}

#[test]
fn calibration_examples() {
    let youden = ThresholdConfig {
        tau: 0.5,
        calibration: Calibration::Youden,
    };
    let scores = labelled(&[0.9, 0.8], &[0.2, 0.1]);
    assert_eq!(cut_candidates(&scores).len(), 5);
    assert_eq!(calibrate_threshold(&scores, &youden).unwrap(), 0.8);

    let budget = |b| ThresholdConfig {
        tau: 0.5,
        calibration: Calibration::MvrBudget(b),
    };
    assert_eq!(calibrate_threshold(&labelled(&[0.4, 0.7], &[]), &budget(0.1)).unwrap(), 0.0);

    // the high-scoring misprediction cannot be caught without flagging every correct input
    let scores = labelled(&[0.3, 0.5, 0.6], &[0.95, 0.1]);
    let tau = calibrate_threshold(&scores, &budget(0.0)).unwrap();
    assert_eq!(tau, brute_force(&scores, Calibration::MvrBudget(0.0)));
    assert_eq!(tau, 0.3);
    assert_eq!(cvr_mvr_at(&scores, tau), (0.5, 0.0));

    let fixed = ThresholdConfig {
        tau: 0.42,
        calibration: Calibration::Fixed,
    };
    assert_eq!(calibrate_threshold(&[], &fixed).unwrap(), 0.42);
    assert!(matches!(
        calibrate_threshold(&labelled(&[0.4], &[]), &youden),
        Err(ValidateError::DegenerateCalibrationSet(_))
    ));
    assert!(matches!(
        calibrate_threshold(&labelled(&[], &[0.4]), &budget(0.1)),
        Err(ValidateError::DegenerateCalibrationSet(_))
    ));
}

/// Sorts once, then tries flagging the lowest `i` inputs for every `i` where
/// the split falls between distinct scores.
fn brute_force(scores: &[(f64, bool)], mode: Calibration) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let right = sorted.iter().filter(|s| s.1).count();
    let wrong = n - right;
    let mut options = Vec::new();
    for i in 0..=n {
        if i > 0 && i < n && sorted[i - 1].0 == sorted[i].0 {
            continue;
        }
        let tau = if i < n {
            sorted[i].0
        } else if sorted[n - 1].0 < 1.0 {
            1.0
        } else {
            f64::from_bits(sorted[n - 1].0.to_bits() + 1)
        };
        let flagged = &sorted[..i];
        let cvr = flagged.iter().filter(|s| !s.1).count() as f64 / wrong as f64;
        let mvr = flagged.iter().filter(|s| s.1).count() as f64 / right as f64;
        options.push((tau, cvr, mvr));
    }
    match mode {
        Calibration::MvrBudget(b) => options.iter().filter(|o| o.2 <= b).map(|o| o.0).fold(f64::NEG_INFINITY, f64::max),
        _ => {
            let best = options.iter().map(|o| o.1 - o.2).fold(f64::NEG_INFINITY, f64::max);
            options.iter().find(|o| o.1 - o.2 == best).unwrap().0
        }
    }
}

#[test]
fn calibration_matches_exhaustive_cuts() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for round in 0..100 {
        let n = rng.gen_range(2..=100);
        let mut scores: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let correct = rng.gen_bool(0.6);
                let s: f64 = if round % 2 == 0 {
                    rng.gen_range(0..=20) as f64 / 20.0
                } else {
                    rng.gen()
                };
                // correct predictions lean high
                let s = if correct { s.max(rng.gen()) } else { s };
                (s, correct)
            })
            .collect();
        scores[0].1 = true;
        scores[1].1 = false;
        for mode in [
            Calibration::Youden,
            Calibration::MvrBudget(0.0),
            Calibration::MvrBudget(0.05),
            Calibration::MvrBudget(0.2),
        ] {
            let cfg = ThresholdConfig { tau: 0.5, calibration: mode };
            assert_eq!(
                calibrate_threshold(&scores, &cfg).unwrap(),
                brute_force(&scores, mode),
                "round {round} {mode:?}"
            );
        }
    }
}
