use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::minic::parse;
use crate::validate::{classify_input, MetricId, ValidationVerdict, Verdict};

fn brute_auc(scores: &[f64], correct: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if correct[i] && !correct[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
    assert_eq!(auc(&[0.3; 6], &[true, false, true, false, true, true]).unwrap(), 0.5);
    assert_eq!(auc(&[0.1, 0.2], &[true, true]).unwrap_err(), HarnessError::SingleClass);
    assert!(matches!(auc(&[0.1], &[true, false]), Err(HarnessError::LengthMismatch(1, 2))));
}

#[test]
fn auc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for round in 0..200 {
        let n = rng.gen_range(2..=500);
        let coarse = round % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.gen_range(0..8) as f64 / 8.0
                } else {
                    rng.gen()
                }
            })
            .collect();
        let mut correct: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        correct[0] = true;
        correct[1] = false;
        let fast = auc(&scores, &correct).unwrap();
        assert!((fast - brute_auc(&scores, &correct)).abs() <= 1e-12, "round {round}");
    }
}

fn verdicts(flags: &[bool]) -> Vec<ValidationVerdict> {
    flags
        .iter()
        .map(|&out| classify_input(if out { 0.0 } else { 1.0 }, 0.5, MetricId::Dsmg))
        .collect()
}

#[test]
fn cvr_mvr_examples() {
    let correct = [false, true, false, true];
    assert_eq!(cvr_mvr(&verdicts(&[true, true, false, false]), &correct).unwrap(), (0.5, 0.5));
    assert_eq!(cvr_mvr(&verdicts(&[true, false, true, false]), &correct).unwrap(), (1.0, 0.0));
    assert_eq!(cvr_mvr(&verdicts(&[false; 4]), &correct).unwrap(), (0.0, 0.0));
    assert_eq!(
        cvr_mvr(&verdicts(&[true, false]), &[true, true]).unwrap_err(),
        HarnessError::EmptyDenominator
    );
}

#[test]
fn cvr_mvr_by_enumeration() {
    for n in 2..=6usize {
        for mask in 0..(1u32 << (2 * n)) {
            let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let correct: Vec<bool> = (0..n).map(|i| mask >> (n + i) & 1 == 1).collect();
            let v = verdicts(&flags);
            let wrong = correct.iter().filter(|c| !**c).count();
            let right = n - wrong;
            match cvr_mvr(&v, &correct) {
                Ok((cvr, mvr)) => {
                    let caught = (0..n).filter(|&i| flags[i] && !correct[i]).count();
                    let lost = (0..n).filter(|&i| flags[i] && correct[i]).count();
                    assert_eq!(cvr, caught as f64 / wrong as f64);
                    assert_eq!(mvr, lost as f64 / right as f64);
                    assert!(v.iter().filter(|x| x.verdict == Verdict::OutOfScope).count() == caught + lost);
                }
                Err(_) => assert!(wrong == 0 || right == 0),
            }
        }
    }
}

#[test]
fn class_metrics_by_hand() {
    // tp 2, fp 1, fn 1, tn 2
    let pred = [1, 1, 1, 0, 0, 0];
    let gold = [1, 1, 0, 1, 0, 0];
    let m = ClassMetrics::compute(&pred, &gold).unwrap();
    assert_eq!(m.accuracy, 4.0 / 6.0);
    assert_eq!(m.precision, 2.0 / 3.0);
    assert_eq!(m.recall, 2.0 / 3.0);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    let none = ClassMetrics::compute(&[0, 0], &[0, 1]).unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    assert!(ClassMetrics::compute(&[], &[]).is_err());
}

#[test]
fn div_risk_rule() {
    let label = |s: &str| ClassRule::DivRisk.label(&parse(s).unwrap());
    assert_eq!(label("int f(int x){return 1/x;}"), 1);
    assert_eq!(label("int f(int x){return x+1;}"), 0);
    assert_eq!(label("int f(int x){return x/2;}"), 0);
    assert_eq!(label("int f(int x){return 7 % (x);}"), 1);
    assert_eq!(label("int f(int x){int y = 3; y /= x; return y;}"), 1);
    assert_eq!(label("int f(int x){int y = 3; y %= 2 + x; return y;}"), 0);
}

#[test]
fn synthetic_corpus() {
    let a = synth_corpus(200, ClassRule::DivRisk, 7).unwrap();
    assert_eq!(a, synth_corpus(200, ClassRule::DivRisk, 7).unwrap());
    assert_ne!(a, synth_corpus(200, ClassRule::DivRisk, 8).unwrap());
    assert_eq!(a.len(), 200);
    let ones = a.iter().filter(|r| r.label == 1).count() as f64 / 200.0;
    assert!((0.48..=0.52).contains(&ones), "{ones}");
    for r in &a {
        let unit = parse(&r.source).unwrap();
        crate::minic::resolve_scopes(&unit).unwrap();
        assert_eq!(ClassRule::DivRisk.label(&unit), r.label);
    }
    let odd = synth_corpus(7, ClassRule::DivRisk, 1).unwrap();
    assert_eq!(odd.iter().filter(|r| r.label == 0).count(), 4);
}

#[test]
fn corpus_round_trip_and_errors() {
    let recs = synth_corpus(3, ClassRule::DivRisk, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&recs, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), recs);

    let good = r#"{"id":"a","source":"int f(int x) { return x; }","label":0}"#;
    let text = format!("{good}\n{}\n", r#"{"id":"b","source":"int g() { return 1; }"}"#);
    assert!(matches!(parse_corpus(&text), Err(HarnessError::MalformedLine { line: 2, .. })));
    let text = format!("{good}\n{}\n", r#"{"id":"c","source":"int g( { return 1; }","label":1}"#);
    match parse_corpus(&text) {
        Err(HarnessError::UnparseableSource { id, message }) => {
            assert_eq!(id, "c");
            assert!(message.starts_with("1:8:"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let dup = format!("{good}\n\n{good}\n");
    assert!(matches!(parse_corpus(&dup), Err(HarnessError::MalformedLine { line: 3, .. })));
    assert!(matches!(load_corpus(dir.path().join("missing")), Err(HarnessError::Io(_))));
}

#[test]
fn splits_are_deterministic_partitions() {
    for seed in 0..20 {
        let spec = SplitSpec {
            seed,
            ..SplitSpec::default()
        };
        let n = 50 + seed as usize * 7;
        let s = split_indices(n, &spec).unwrap();
        assert_eq!(s, split_indices(n, &spec).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.calibrate).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert_eq!(s.train.len(), (0.6 * n as f64).round() as usize);
    }
    let bad = SplitSpec {
        train: 0.9,
        ..SplitSpec::default()
    };
    assert!(matches!(split_indices(10, &bad), Err(HarnessError::InvalidConfig(_))));
}

fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::seeded(seed);
    cfg.corpus = CorpusSource::Synthetic {
        n: 120,
        seed,
        rule: ClassRule::DivRisk,
    };
    cfg.model.hidden_dim = 16;
    cfg.model.vocab_hash_dim = 256;
    cfg.model.num_layers = 3;
    cfg.dsmg.k = 8;
    cfg.search.population = 6;
    cfg.search.generations = 3;
    cfg.ensemble_size = 2;
    cfg
}

#[test]
fn pipeline_conservation_and_determinism() {
    let cfg = small_config(3);
    let r = run_pipeline(&cfg).unwrap();
    let c = &r.counts;
    assert_eq!(c.train + c.calibrate + c.test, 120);
    assert_eq!(c.corrected + c.still_wrong, c.mispredicted);
    assert_eq!(c.regressed + c.still_correct, c.test - c.mispredicted);
    assert!(c.adapted <= c.flagged);
    assert_eq!(r.inputs.len(), c.test);
    assert_eq!(r.uncertainty_auc.len(), 10);
    for f in [r.corrected_fraction, r.regressed_fraction, r.baseline.accuracy, r.adapted.accuracy] {
        assert!((0.0..=1.0).contains(&f));
    }
    let again = run_pipeline(&cfg).unwrap();
    assert_eq!(again.without_timing().to_json(), r.without_timing().to_json());
}

#[test]
fn pipeline_without_adaptation_is_a_no_op() {
    let mut cfg = small_config(4);
    cfg.strategy = None;
    cfg.baselines = false;
    let r = run_pipeline(&cfg).unwrap();
    assert_eq!(r.baseline, r.adapted);
    assert_eq!((r.counts.corrected, r.counts.regressed, r.counts.adapted), (0, 0, 0));
    assert!(r.uncertainty_auc.is_empty());
}

#[test]
fn report_round_trip() {
    let mut cfg = small_config(5);
    cfg.baselines = false;
    let r = run_pipeline(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report_write(&r, &path).unwrap();
    let back = report_read(&path).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.config, cfg);

    let text = std::fs::read_to_string(&path).unwrap().replace(REPORT_VERSION, "scope-refine-report/99");
    assert_eq!(
        MetricsReport::from_json(&text).unwrap_err(),
        HarnessError::VersionMismatch("scope-refine-report/99".into())
    );
    assert!(matches!(MetricsReport::from_json("{}"), Err(HarnessError::VersionMismatch(_))));
}

#[test]
fn config_defaults_fill_in() {
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"train_seed": 9}"#).unwrap();
    assert_eq!(cfg.train_seed, 9);
    assert_eq!(cfg.search, ExperimentConfig::default().search);
    let text = serde_json::to_string(&ExperimentConfig::seeded(2)).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), ExperimentConfig::seeded(2));
}
