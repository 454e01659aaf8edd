//! Searching transformation genomes for the variant a model handles best.
//!
//! Three strategies share one evaluator: evolutionary search ([`aes_search`]),
//! first-improvement [`hill_climb`], and [`random_search`]. Fitness defaults to the
//! DSMG combined score of the transformed program.

mod engine;
mod strategies;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minic::{resolve_scopes, SemanticError, SourceUnit};
use crate::model::{Classifier, ModelError, SubmodelSampler, TokenizedInput};
use crate::transform::{TransformGenome, DEFAULT_MAX_GENOME_LEN};
use crate::validate::{dsmg_score, DsmgConfig, DsmgWeights, ValidateError};

pub use engine::Candidate;
pub use strategies::{aes_search, hill_climb, random_search};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("budget {budget} is smaller than the population {population}")]
    BudgetTooSmall { budget: usize, population: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("input does not resolve: {0}")]
    Unresolved(#[from] SemanticError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scores a candidate program; higher is better.
pub trait Fitness: Sync {
    fn fitness(&self, unit: &SourceUnit) -> Result<f64, SearchError>;
}

impl<F> Fitness for F
where
    F: Fn(&SourceUnit) -> Result<f64, SearchError> + Sync,
{
    fn fitness(&self, unit: &SourceUnit) -> Result<f64, SearchError> {
        self(unit)
    }
}

/// DSMG combined score under one fixed set of sub-models.
pub struct DsmgFitness<'a> {
    sampler: Box<dyn SubmodelSampler + 'a>,
    weights: DsmgWeights,
}

impl<'a> DsmgFitness<'a> {
    pub fn new(model: &'a dyn Classifier, cfg: &DsmgConfig) -> Self {
        DsmgFitness {
            sampler: model.submodel_sampler(cfg.k, cfg.base_seed),
            weights: cfg.weights,
        }
    }
}

impl Fitness for DsmgFitness<'_> {
    fn fitness(&self, unit: &SourceUnit) -> Result<f64, SearchError> {
        let samples = self.sampler.sample(&TokenizedInput::from_unit(unit))?;
        Ok(dsmg_score(&samples, self.weights, None)?.combined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Aes,
    #[serde(rename = "hc")]
    HillClimb,
    #[serde(rename = "rand")]
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Aes, Strategy::HillClimb, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Aes => "aes",
            Strategy::HillClimb => "hc",
            Strategy::Random => "rand",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "aes" => Ok(Strategy::Aes),
            "hc" | "hill_climb" | "hill-climb" => Ok(Strategy::HillClimb),
            "rand" | "random" => Ok(Strategy::Random),
            _ => Err(format!("unknown strategy '{s}' (expected aes, hc or rand)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Defaults to `population * (generations + 1)`.
    pub eval_budget: Option<usize>,
    pub early_stop_tau: Option<f64>,
    pub max_genome_len: usize,
    /// Hill climbing gives up after this many non-improving neighbours in a row.
    pub max_stall: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 20,
            generations: 10,
            tournament: 3,
            crossover_rate: 0.7,
            mutation_rate: 0.3,
            elitism: 1,
            eval_budget: None,
            early_stop_tau: None,
            max_genome_len: DEFAULT_MAX_GENOME_LEN,
            max_stall: 25,
        }
    }
}

impl SearchConfig {
    pub fn budget(&self) -> usize {
        self.eval_budget
            .unwrap_or(self.population * (self.generations + 1))
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.population < 2 {
            return bad("population must be >= 2");
        }
        if self.elitism >= self.population {
            return bad("elitism must be below the population");
        }
        if self.tournament == 0 {
            return bad("tournament size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.max_genome_len == 0 {
            return bad("max_genome_len must be >= 1");
        }
        if self.budget() < self.population {
            return Err(SearchError::BudgetTooSmall {
                budget: self.budget(),
                population: self.population,
            });
        }
        Ok(())
    }
}

/// Progress after one generation (AES) or one step (HC, random).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    /// Best fitness seen so far.
    pub best: f64,
    /// Mean fitness of the candidates scored in this step.
    pub mean: f64,
    /// Evaluations used so far.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Candidate,
    pub history: Vec<GenerationRecord>,
    pub evaluations_used: usize,
    pub strategy: Strategy,
    /// Edits that took effect across every genome application.
    pub transforms_applied: usize,
    pub transform_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptKind {
    Unchanged,
    Refined,
    BestEffort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub kind: AdaptKind,
    pub original_score: f64,
    pub original_prediction: usize,
    /// Score of the returned program (the original when unchanged).
    pub score: f64,
    pub prediction: usize,
    pub genome: TransformGenome,
    pub unit: SourceUnit,
    /// `None` for in-scope inputs, which are never searched.
    pub search: Option<SearchResult>,
    pub wall_seconds: f64,
}

impl AdaptOutcome {
    pub fn evaluations(&self) -> usize {
        self.search.as_ref().map_or(0, |s| s.evaluations_used)
    }
}

/// Leaves in-scope inputs alone; otherwise searches for a variant scoring at least `tau`.
pub fn adapt(
    original: &SourceUnit,
    model: &dyn Classifier,
    dsmg: &DsmgConfig,
    tau: f64,
    strategy: Strategy,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<AdaptOutcome, SearchError> {
    let start = Instant::now();
    resolve_scopes(original)?;
    let fitness = DsmgFitness::new(model, dsmg);
    let original_score = fitness.fitness(original)?;
    let original_prediction = model.infer(&TokenizedInput::from_unit(original))?.predicted();
    if original_score >= tau {
        return Ok(AdaptOutcome {
            kind: AdaptKind::Unchanged,
            original_score,
            original_prediction,
            score: original_score,
            prediction: original_prediction,
            genome: TransformGenome::default(),
            unit: original.clone(),
            search: None,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let result = match strategy {
        Strategy::Aes => {
            let cfg = SearchConfig {
                early_stop_tau: cfg.early_stop_tau.or(Some(tau)),
                ..*cfg
            };
            aes_search(original, &fitness, &cfg, seed)?
        }
        Strategy::HillClimb => hill_climb(original, &fitness, cfg, seed)?,
        Strategy::Random => random_search(original, &fitness, cfg, tau, seed)?,
    };
    let best = &result.best;
    let prediction = model.infer(&TokenizedInput::from_unit(&best.unit))?.predicted();
    Ok(AdaptOutcome {
        kind: if best.fitness >= tau {
            AdaptKind::Refined
        } else {
            AdaptKind::BestEffort
        },
        original_score,
        original_prediction,
        score: best.fitness,
        prediction,
        genome: best.genome.clone(),
        unit: best.unit.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
        search: Some(result),
    })
}
