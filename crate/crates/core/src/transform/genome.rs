//! Transformation genomes: ordered edit lists resolved against the evolving tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minic::SourceUnit;

use super::{apply_indexed, OperatorId, SiteIndex, TransformOutcome};

pub const DEFAULT_MAX_GENOME_LEN: usize = 8;

/// One edit: apply `op` at its `rank`-th applicable site (at application time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub op: OperatorId,
    pub rank: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransformGenome {
    pub edits: Vec<Edit>,
}

impl TransformGenome {
    pub fn new(edits: Vec<Edit>) -> Self {
        TransformGenome { edits }
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

impl std::fmt::Display for TransformGenome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .edits
            .iter()
            .map(|e| format!("{}@{}", e.op.number(), e.rank))
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// Applies edits left to right, skipping those that do not apply.
/// Returns the result and how many edits took effect.
pub fn apply_genome(unit: &SourceUnit, genome: &TransformGenome) -> (SourceUnit, usize) {
    let (out, applied) = apply_genome_traced(unit, genome);
    (out, applied.iter().filter(|&&a| a).count())
}

/// Like [`apply_genome`], but reports per edit whether it applied.
pub fn apply_genome_traced(unit: &SourceUnit, genome: &TransformGenome) -> (SourceUnit, Vec<bool>) {
    let mut current = unit.clone();
    let mut applied = Vec::with_capacity(genome.len());
    for edit in &genome.edits {
        let index = SiteIndex::build(&current);
        let outcome = match index.sites(edit.op).get(edit.rank) {
            Some(site) => apply_indexed(&current, &index, edit.op, site.node_id, edit.seed),
            None => TransformOutcome::Inapplicable("rank out of range".into()),
        };
        match outcome {
            TransformOutcome::Applied { unit, .. } => {
                current = unit;
                applied.push(true);
            }
            TransformOutcome::Inapplicable(_) => applied.push(false),
        }
    }
    (current, applied)
}

/// A random genome of up to `len` edits, each drawn against the tree produced by the
/// edits before it. Stops early if nothing applies.
pub fn random_genome(unit: &SourceUnit, len: usize, rng_seed: u64) -> TransformGenome {
    random_genome_with(unit, len, rng_seed, &OperatorId::ALL)
}

/// [`random_genome`] restricted to the operators in `allowed`.
pub fn random_genome_with(
    unit: &SourceUnit,
    len: usize,
    rng_seed: u64,
    allowed: &[OperatorId],
) -> TransformGenome {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut current = unit.clone();
    let mut edits = Vec::with_capacity(len);
    for _ in 0..len {
        let index = SiteIndex::build(&current);
        let ops: Vec<OperatorId> = index
            .applicable_ops()
            .into_iter()
            .filter(|op| allowed.contains(op))
            .collect();
        if ops.is_empty() {
            break;
        }
        let op = ops[rng.gen_range(0..ops.len())];
        let sites = index.sites(op);
        let rank = rng.gen_range(0..sites.len());
        let seed: u64 = rng.gen();
        let node = sites[rank].node_id;
        if let TransformOutcome::Applied { unit, .. } =
            apply_indexed(&current, &index, op, node, seed)
        {
            current = unit;
        }
        edits.push(Edit { op, rank, seed });
    }
    TransformGenome { edits }
}

/// One edit drawn uniformly over applicable operators, then over that operator's sites.
/// `None` when nothing applies to `unit`.
pub fn random_edit<R: Rng + ?Sized>(unit: &SourceUnit, rng: &mut R) -> Option<Edit> {
    let index = SiteIndex::build(unit);
    let ops = index.applicable_ops();
    if ops.is_empty() {
        return None;
    }
    let op = ops[rng.gen_range(0..ops.len())];
    let rank = rng.gen_range(0..index.sites(op).len());
    Some(Edit {
        op,
        rank,
        seed: rng.gen(),
    })
}
