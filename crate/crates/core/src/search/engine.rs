//! Bookkeeping shared by all strategies: budgeted, memoized, order-preserving evaluation.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::minic::{print_source, SourceUnit};
use crate::transform::{apply_genome, random_edit, Edit, TransformGenome};

use super::{Fitness, GenerationRecord, SearchError, SearchResult, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genome: TransformGenome,
    pub unit: SourceUnit,
    pub fitness: f64,
    /// Position in discovery order, starting at 0 for the original.
    pub discovered: usize,
}

impl Candidate {
    /// Higher fitness, then shorter genome, then earlier discovery.
    pub fn beats(&self, other: &Candidate) -> bool {
        (self.fitness, std::cmp::Reverse(self.genome.len()), std::cmp::Reverse(self.discovered))
            > (other.fitness, std::cmp::Reverse(other.genome.len()), std::cmp::Reverse(other.discovered))
    }
}

pub(crate) struct Evaluator<'a> {
    original: &'a SourceUnit,
    fitness: &'a dyn Fitness,
    budget: usize,
    cache: HashMap<String, f64>,
    pub used: usize,
    discovered: usize,
    pub best: Option<Candidate>,
    pub history: Vec<GenerationRecord>,
    transform_time: Duration,
    applied: usize,
    started: Instant,
}

impl<'a> Evaluator<'a> {
    pub fn new(original: &'a SourceUnit, fitness: &'a dyn Fitness, budget: usize) -> Self {
        Evaluator {
            original,
            fitness,
            budget,
            cache: HashMap::new(),
            used: 0,
            discovered: 0,
            best: None,
            history: Vec::new(),
            transform_time: Duration::ZERO,
            applied: 0,
            started: Instant::now(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.used
    }

    /// The program a genome produces.
    pub fn realize(&mut self, genome: &TransformGenome) -> SourceUnit {
        let t = Instant::now();
        let (unit, applied) = apply_genome(self.original, genome);
        self.transform_time += t.elapsed();
        self.applied += applied;
        unit
    }

    /// Scores genomes in order. Programs already scored cost nothing; the rest are
    /// scored in parallel until the budget runs out, and anything past that point is
    /// dropped (`None`).
    pub fn evaluate(&mut self, genomes: Vec<TransformGenome>) -> Result<Vec<Option<Candidate>>, SearchError> {
        let original = self.original;
        let realized: Vec<(SourceUnit, usize, Duration)> = genomes
            .par_iter()
            .map(|g| {
                let t = Instant::now();
                let (unit, applied) = apply_genome(original, g);
                (unit, applied, t.elapsed())
            })
            .collect();
        let mut keys = Vec::with_capacity(realized.len());
        let mut fresh: Vec<usize> = Vec::new();
        let mut pending: HashMap<String, usize> = HashMap::new();
        let mut cut = realized.len();
        for (i, (unit, applied, spent)) in realized.iter().enumerate() {
            self.transform_time += *spent;
            self.applied += applied;
            let key = print_source(unit);
            if !self.cache.contains_key(&key) && !pending.contains_key(&key) {
                if fresh.len() == self.remaining() {
                    cut = i;
                    break;
                }
                pending.insert(key.clone(), fresh.len());
                fresh.push(i);
            }
            keys.push(key);
        }
        let scores: Vec<f64> = fresh
            .par_iter()
            .map(|&i| self.fitness.fitness(&realized[i].0))
            .collect::<Result<_, _>>()?;
        self.used += fresh.len();
        for (&i, &s) in fresh.iter().zip(&scores) {
            self.cache.insert(keys[i].clone(), s);
        }
        let mut out = Vec::with_capacity(genomes.len());
        for (i, (genome, (unit, _, _))) in genomes.into_iter().zip(realized).enumerate() {
            if i >= cut {
                out.push(None);
                continue;
            }
            let cand = Candidate {
                genome,
                unit,
                fitness: self.cache[&keys[i]],
                discovered: self.discovered,
            };
            self.discovered += 1;
            if self.best.as_ref().map_or(true, |b| cand.beats(b)) {
                self.best = Some(cand.clone());
            }
            out.push(Some(cand));
        }
        Ok(out)
    }

    /// Canonical text of the program `genome` produces, and whether it has been scored.
    pub fn lookup(&mut self, genome: &TransformGenome) -> (String, bool) {
        let key = print_source(&self.realize(genome));
        let known = self.cache.contains_key(&key);
        (key, known)
    }

    pub fn record(&mut self, scored: &[&Candidate]) {
        let mean = if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().map(|c| c.fitness).sum::<f64>() / scored.len() as f64
        };
        self.history.push(GenerationRecord {
            index: self.history.len(),
            best: self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.fitness),
            mean,
            evaluations: self.used,
        });
    }

    pub fn finish(self, strategy: Strategy) -> SearchResult {
        SearchResult {
            best: self.best.expect("the original is always scored first"),
            history: self.history,
            evaluations_used: self.used,
            strategy,
            transforms_applied: self.applied,
            transform_seconds: self.transform_time.as_secs_f64(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
    }

    /// One neighbour of `genome`: append, replace or drop a single edit, chosen
    /// uniformly among the moves that are possible. `None` if no move exists.
    pub fn mutate<R: Rng>(&mut self, genome: &TransformGenome, max_len: usize, rng: &mut R) -> Option<TransformGenome> {
        #[derive(Clone, Copy)]
        enum Move {
            Append,
            Replace,
            Drop,
        }
        let mut moves = Vec::with_capacity(3);
        if genome.len() < max_len {
            moves.push(Move::Append);
        }
        if !genome.is_empty() {
            moves.extend([Move::Replace, Move::Drop]);
        }
        while !moves.is_empty() {
            let pick = rng.gen_range(0..moves.len());
            let mut edits = genome.edits.clone();
            let done = match moves[pick] {
                Move::Append => self.draw_after(&edits, rng).map(|e| edits.push(e)),
                Move::Replace => {
                    let at = rng.gen_range(0..edits.len());
                    self.draw_after(&edits[..at], rng).map(|e| edits[at] = e)
                }
                Move::Drop => {
                    edits.remove(rng.gen_range(0..edits.len()));
                    Some(())
                }
            };
            if done.is_some() {
                return Some(TransformGenome::new(edits));
            }
            moves.swap_remove(pick);
        }
        None
    }

    fn draw_after<R: Rng>(&mut self, prefix: &[Edit], rng: &mut R) -> Option<Edit> {
        let unit = self.realize(&TransformGenome::new(prefix.to_vec()));
        random_edit(&unit, rng)
    }
}
