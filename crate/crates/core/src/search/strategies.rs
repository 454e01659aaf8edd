use std::cmp::Ordering;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::minic::{resolve_scopes, SourceUnit};
use crate::transform::{random_genome, TransformGenome};

use super::engine::{Candidate, Evaluator};
use super::{Fitness, SearchConfig, SearchError, SearchResult, Strategy};

/// Re-mutation attempts for an offspring that repeats an already scored program.
const NOVELTY_TRIES: usize = 8;

fn random_length<R: Rng>(rng: &mut R, max_len: usize) -> usize {
    rng.gen_range(1..=max_len)
}

fn tournament<'c, R: Rng>(pop: &'c [Candidate], size: usize, rng: &mut R) -> &'c Candidate {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.gen_range(0..pop.len())];
        if c.beats(best) {
            best = c;
        }
    }
    best
}

/// One-point crossover: a prefix of `a` followed by a suffix of `b`.
fn crossover<R: Rng>(a: &TransformGenome, b: &TransformGenome, max_len: usize, rng: &mut R) -> TransformGenome {
    let i = rng.gen_range(0..=a.len());
    let j = rng.gen_range(0..=b.len());
    let mut edits: Vec<_> = a.edits[..i].iter().chain(&b.edits[j..]).copied().collect();
    edits.truncate(max_len);
    TransformGenome::new(edits)
}

/// Evolutionary search. Generation 0 holds the original plus `population - 1` random
/// genomes; later generations keep the elite and breed the rest by tournament
/// selection, one-point crossover and single-edit mutation. An offspring that repeats
/// a program already scored (or bred this generation) is mutated again, a few times
/// at most.
pub fn aes_search(
    original: &SourceUnit,
    fitness: &dyn Fitness,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    resolve_scopes(original)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Evaluator::new(original, fitness, cfg.budget());
    let reached = |ev: &Evaluator| match (cfg.early_stop_tau, &ev.best) {
        (Some(tau), Some(b)) => b.fitness >= tau,
        _ => false,
    };

    let mut genomes = vec![TransformGenome::default()];
    for _ in 1..cfg.population {
        let len = random_length(&mut rng, cfg.max_genome_len);
        genomes.push(random_genome(original, len, rng.gen()));
    }
    let mut pop: Vec<Candidate> = ev.evaluate(genomes)?.into_iter().flatten().collect();
    ev.record(&pop.iter().collect::<Vec<_>>());

    for _ in 0..cfg.generations {
        if reached(&ev) || ev.remaining() == 0 {
            break;
        }
        pop.sort_by(|a, b| {
            if a.beats(b) {
                Ordering::Less
            } else if b.beats(a) {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        });
        let elites: Vec<Candidate> = pop[..cfg.elitism.min(pop.len())].to_vec();
        let mut children = Vec::with_capacity(cfg.population - elites.len());
        let mut bred: HashSet<String> = HashSet::new();
        while children.len() < cfg.population - elites.len() {
            let a = tournament(&pop, cfg.tournament, &mut rng);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                let b = tournament(&pop, cfg.tournament, &mut rng);
                crossover(&a.genome, &b.genome, cfg.max_genome_len, &mut rng)
            } else {
                a.genome.clone()
            };
            if rng.gen_bool(cfg.mutation_rate) {
                if let Some(m) = ev.mutate(&child, cfg.max_genome_len, &mut rng) {
                    child = m;
                }
            }
            for _ in 0..NOVELTY_TRIES {
                let (key, known) = ev.lookup(&child);
                if !known && !bred.contains(&key) {
                    break;
                }
                match ev.mutate(&child, cfg.max_genome_len, &mut rng) {
                    Some(m) => child = m,
                    None => break,
                }
            }
            bred.insert(ev.lookup(&child).0);
            children.push(child);
        }
        let scored: Vec<Candidate> = ev.evaluate(children)?.into_iter().flatten().collect();
        ev.record(&scored.iter().collect::<Vec<_>>());
        pop = elites.into_iter().chain(scored).collect();
    }
    Ok(ev.finish(Strategy::Aes))
}

/// First-improvement hill climbing over single-edit neighbours, starting from the
/// original. Stops when the budget is spent or `cfg.max_stall` neighbours in a row
/// fail to improve.
pub fn hill_climb(
    original: &SourceUnit,
    fitness: &dyn Fitness,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchResult, SearchError> {
    resolve_scopes(original)?;
    let budget = cfg.budget();
    if budget == 0 {
        return Err(SearchError::BudgetTooSmall { budget, population: 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Evaluator::new(original, fitness, budget);
    let mut current = ev.evaluate(vec![TransformGenome::default()])?.remove(0).expect("budget >= 1");
    ev.record(&[&current]);
    let mut stall = 0;
    while ev.remaining() > 0 && stall < cfg.max_stall {
        let Some(neighbour) = ev.mutate(&current.genome, cfg.max_genome_len, &mut rng) else {
            break;
        };
        let Some(cand) = ev.evaluate(vec![neighbour])?.remove(0) else {
            break;
        };
        ev.record(&[&cand]);
        if cand.fitness > current.fitness {
            current = cand;
            stall = 0;
        } else {
            stall += 1;
        }
    }
    Ok(ev.finish(Strategy::HillClimb))
}

/// Independent random genomes until one scores at least `tau` or the budget is spent.
/// The original is scored first.
pub fn random_search(
    original: &SourceUnit,
    fitness: &dyn Fitness,
    cfg: &SearchConfig,
    tau: f64,
    seed: u64,
) -> Result<SearchResult, SearchError> {
    resolve_scopes(original)?;
    let budget = cfg.budget();
    if budget == 0 {
        return Err(SearchError::BudgetTooSmall { budget, population: 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Evaluator::new(original, fitness, budget);
    let first = ev.evaluate(vec![TransformGenome::default()])?.remove(0).expect("budget >= 1");
    ev.record(&[&first]);
    // repeats are free, so bound the draws as well
    let mut draws = 0;
    while ev.remaining() > 0 && draws < 4 * budget {
        if ev.best.as_ref().is_some_and(|b| b.fitness >= tau) {
            break;
        }
        draws += 1;
        let len = random_length(&mut rng, cfg.max_genome_len);
        let genome = random_genome(original, len, rng.gen());
        if let Some(c) = ev.evaluate(vec![genome])?.remove(0) {
            ev.record(&[&c]);
        }
    }
    Ok(ev.finish(Strategy::Random))
}
