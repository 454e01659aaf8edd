//! Labelled corpora: JSONL loading, the synthetic generator, and splits.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minic::gen::{random_unit, GenConfig};
use crate::minic::{equiv::random_args, interpret, parse, resolve_scopes, BinOp, ExprKind, RuntimeFault, SourceUnit, StmtKind};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub source: String,
    pub label: usize,
}

/// Parses JSONL corpus text. Blank lines are skipped; line numbers start at 1.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, HarnessError> {
    let mut out: Vec<CorpusRecord> = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| HarnessError::MalformedLine {
            line: n,
            reason: e.to_string(),
        })?;
        if !ids.insert(rec.id.clone()) {
            return Err(HarnessError::MalformedLine {
                line: n,
                reason: format!("duplicate id '{}'", rec.id),
            });
        }
        let unit = parse(&rec.source).map_err(|e| HarnessError::UnparseableSource {
            id: rec.id.clone(),
            message: e.to_string(),
        })?;
        resolve_scopes(&unit).map_err(|e| HarnessError::UnparseableSource {
            id: rec.id.clone(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_corpus(&text)
}

pub fn write_corpus(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    std::fs::write(path, corpus_jsonl(records)).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn corpus_jsonl(records: &[CorpusRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassRule {
    /// 1 iff some `/` or `%` (plain or compound) divides by a bare variable.
    #[serde(rename = "div-risk")]
    DivRisk,
}

impl ClassRule {
    pub fn label(self, unit: &SourceUnit) -> usize {
        match self {
            ClassRule::DivRisk => usize::from(div_risk(unit)),
        }
    }
}

fn divides(op: BinOp) -> bool {
    matches!(op, BinOp::Div | BinOp::Rem)
}

pub fn div_risk(unit: &SourceUnit) -> bool {
    let mut hit = false;
    unit.walk_stmts(&mut |_, s| {
        if let StmtKind::CompoundAssign { op, value, .. } = &s.kind {
            if divides(*op) && matches!(value.unparen().kind, ExprKind::Var(_)) {
                hit = true;
            }
        }
        for e in s.own_exprs() {
            e.walk(&mut |e| {
                if let ExprKind::Binary(op, _, r) = &e.kind {
                    if divides(*op) && matches!(r.unparen().kind, ExprKind::Var(_)) {
                        hit = true;
                    }
                }
            });
        }
    });
    hit
}

const PROBE_FUEL: u64 = 100_000;

/// `n` seeded random programs, half of each class (the odd one out goes to class 0).
pub fn synth_corpus(n: usize, rule: ClassRule, seed: u64) -> Result<Vec<CorpusRecord>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want = [n - n / 2, n / 2];
    let mut buckets: [Vec<SourceUnit>; 2] = [Vec::new(), Vec::new()];
    let limit = 200 * n.max(10);
    let mut tries = 0;
    while buckets[0].len() < want[0] || buckets[1].len() < want[1] {
        tries += 1;
        if tries > limit {
            return Err(HarnessError::GenerationExhausted { requested: n, tries: limit });
        }
        let unit = random_unit(&mut rng, &GenConfig::default());
        let label = rule.label(&unit);
        if buckets[label].len() >= want[label] {
            continue;
        }
        let entry = unit.function("main_entry").expect("generator emits main_entry");
        let args = random_args(entry, &mut rng);
        if interpret(&unit, "main_entry", &args, PROBE_FUEL).result == Err(RuntimeFault::FuelExhausted) {
            continue;
        }
        buckets[label].push(unit);
    }
    // interleave classes in a seeded order so any prefix stays roughly balanced
    let mut order: Vec<usize> = std::iter::repeat(0).take(want[0]).chain(std::iter::repeat(1).take(want[1])).collect();
    order.shuffle(&mut rng);
    let mut next = [0usize, 0usize];
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let unit = &buckets[label][next[label]];
            next[label] += 1;
            CorpusRecord {
                id: format!("syn{seed}-{i:05}"),
                source: crate::minic::print_source(unit),
                label,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub calibrate: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            calibrate: 0.2,
            test: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub calibrate: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` and cuts it by the fractions. Each part keeps ascending order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split, HarnessError> {
    let parts = [spec.train, spec.calibrate, spec.test];
    if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HarnessError::InvalidConfig(format!(
            "split fractions {parts:?} must lie in [0, 1] and sum to 1"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let n_train = (spec.train * n as f64).round() as usize;
    let n_cal = ((spec.calibrate * n as f64).round() as usize).min(n - n_train);
    let mut train = idx[..n_train].to_vec();
    let mut calibrate = idx[n_train..n_train + n_cal].to_vec();
    let mut test = idx[n_train + n_cal..].to_vec();
    train.sort_unstable();
    calibrate.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, calibrate, test })
}

/// A seed from `rng` for per-record work that must not depend on processing order.
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    r.gen()
}
