//! Elite archive, prompt-operator selection and the generation loop.

mod archive;
mod run;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{BridgeError, OpKind};
use propgen_core::dsl::SEED_NAMES;
use propgen_core::train::TrainConfig;

pub use archive::{dedup_key, EliteArchive, Insertion};
pub use run::{
    init_population, run_generation, run_search, CandidateRecord, ConvergenceRow, Evaluator,
    GenerationLog, PoolEvaluator, SearchReport, SearchState, SeedOutcome,
};
pub use select::{select_for_prompt, top_count, third_count};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "seed")]
    Seed,
    E1,
    E2,
    C1,
}

impl From<OpKind> for Origin {
    fn from(op: OpKind) -> Self {
        match op {
            OpKind::E1 => Origin::E1,
            OpKind::E2 => Origin::E2,
            OpKind::C1 => Origin::C1,
        }
    }
}

/// An evaluated (or about to be evaluated) mechanism. Only validation
/// fitness is kept; test accuracy never reaches this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub ideas: String,
    pub program_text: String,
    pub fitness: Option<f64>,
    pub origin: Origin,
    pub generation_born: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub generations: usize,
    /// Individuals embedded in an E1 prompt.
    pub p1: usize,
    /// Individuals embedded in an E2 prompt.
    pub p2: usize,
    pub parallel_responses: usize,
    pub prompt_ops: Vec<OpKind>,
    pub archive_capacity: usize,
    /// Builtin mechanisms that form the initial population.
    pub seeds: Vec<String>,
    /// Concurrent candidate evaluations.
    pub workers: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            generations: 30,
            p1: 4,
            p2: 4,
            parallel_responses: 4,
            prompt_ops: OpKind::ALL.to_vec(),
            archive_capacity: 30,
            seeds: SEED_NAMES.iter().map(|s| s.to_string()).collect(),
            workers: 4,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn candidates_per_generation(&self) -> usize {
        self.prompt_ops.len() * self.parallel_responses
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.p1 == 0 || self.p2 == 0 {
            return bad("p1 and p2 must be positive");
        }
        if self.parallel_responses == 0 {
            return bad("parallel_responses must be positive");
        }
        if self.prompt_ops.is_empty() {
            return bad("prompt_ops must not be empty");
        }
        let mut ops = self.prompt_ops.clone();
        ops.sort();
        ops.dedup();
        if ops.len() != self.prompt_ops.len() {
            return bad("prompt_ops has duplicates");
        }
        if self.archive_capacity == 0 {
            return bad("archive_capacity must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed mechanism is required");
        }
        self.train
            .validate()
            .map_err(|e| SearchError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search configuration: {0}")]
    Config(String),
    #[error("no seed mechanism evaluated successfully; the archive is empty")]
    EmptyArchive,
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}
