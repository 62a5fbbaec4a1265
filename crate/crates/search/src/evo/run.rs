use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{select_for_prompt, EliteArchive, Individual, Origin, SearchConfig, SearchError};
use crate::bridge::{
    basic_content, parse_response, render_prompt, request_info, Backend, EmbeddedIndividual,
    OpKind, PromptRequest,
};
use propgen_core::dsl::builtin;
use propgen_core::graph::{Graph, Split};
use propgen_core::train::{score_batch, DiscardReason, FitResult, FitStatus, TrainConfig};

/// Scores a batch of programs, preserving order.
pub trait Evaluator: Sync {
    fn evaluate(&self, programs: &[String]) -> Vec<FitResult>;
}

/// Trains every candidate on one dataset with the worker pool.
#[derive(Debug, Clone)]
pub struct PoolEvaluator {
    pub graph: Arc<Graph>,
    pub split: Arc<Split>,
    pub train: TrainConfig,
    pub workers: usize,
}

impl Evaluator for PoolEvaluator {
    fn evaluate(&self, programs: &[String]) -> Vec<FitResult> {
        score_batch(
            programs,
            self.graph.clone(),
            self.split.clone(),
            &self.train,
            self.workers,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: u64,
    pub op: OpKind,
    pub status: FitStatus,
    pub fitness: Option<f64>,
    pub wall_seconds: f64,
}

/// One line of `generations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub gen: usize,
    pub candidates: Vec<CandidateRecord>,
    pub best_fitness: f64,
    pub archive_size: usize,
    /// Slots for which the bridge produced no text, including skipped ops.
    pub bridge_failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_ops: Vec<OpKind>,
}

impl GenerationLog {
    pub fn count(&self, status: FitStatus) -> usize {
        self.candidates.iter().filter(|c| c.status == status).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub name: String,
    pub id: u64,
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub gen: usize,
    pub best: f64,
    pub mean: f64,
    pub evaluated_ok: usize,
}

/// Controller-owned state between generations.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub archive: EliteArchive,
    pub rng: ChaCha8Rng,
    pub next_id: u64,
}

impl SearchState {
    fn convergence(&self, gen: usize, evaluated_ok: usize) -> ConvergenceRow {
        ConvergenceRow {
            gen,
            best: self.archive.best_fitness().unwrap_or(0.0),
            mean: self.archive.mean_fitness().unwrap_or(0.0),
            evaluated_ok,
        }
    }
}

/// Evaluates the seed mechanisms (duplicates collapsed) and builds the
/// initial archive. Fails only when no seed survives.
pub fn init_population(
    cfg: &SearchConfig,
    evaluator: &dyn Evaluator,
) -> Result<(SearchState, Vec<SeedOutcome>), SearchError> {
    let mut names: Vec<&str> = Vec::new();
    for s in &cfg.seeds {
        if !names.contains(&s.as_str()) {
            names.push(s);
        }
    }
    let texts: Vec<String> = names
        .iter()
        .map(|n| builtin(n).map(str::to_string))
        .collect::<Result<_, _>>()
        .map_err(|e| SearchError::Config(e.to_string()))?;
    let results = evaluator.evaluate(&texts);

    let mut archive = EliteArchive::new(cfg.archive_capacity);
    let mut outcomes = Vec::new();
    for (i, ((name, text), result)) in names.iter().zip(texts).zip(results).enumerate() {
        let id = i as u64;
        if result.is_ok() {
            archive.insert(Individual {
                id,
                ideas: format!("Classic spectral GNN `{name}`."),
                program_text: text,
                fitness: result.fitness,
                origin: Origin::Seed,
                generation_born: 0,
            });
        } else {
            log::warn!(
                "seed {name} discarded ({}): {}",
                result.status,
                result.message.as_deref().unwrap_or("")
            );
        }
        outcomes.push(SeedOutcome {
            name: name.to_string(),
            id,
            result,
        });
    }
    if archive.is_empty() {
        return Err(SearchError::EmptyArchive);
    }
    let state = SearchState {
        archive,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        next_id: names.len() as u64,
    };
    Ok((state, outcomes))
}

fn embed(ind: &Individual) -> EmbeddedIndividual {
    EmbeddedIndividual {
        ideas: ind.ideas.clone(),
        program_text: ind.program_text.clone(),
        fitness: ind.fitness.unwrap_or(0.0),
    }
}

/// Prompts, parses, evaluates and merges one generation. Archive changes
/// happen here on the calling thread after every result is in.
pub fn run_generation(
    state: &mut SearchState,
    backend: &Backend,
    evaluator: &dyn Evaluator,
    cfg: &SearchConfig,
    basic: &str,
    gen: usize,
) -> Result<GenerationLog, SearchError> {
    let mut prompts = Vec::new();
    let mut skipped_ops = Vec::new();
    for &op in &cfg.prompt_ops {
        let p = match op {
            OpKind::E1 => cfg.p1,
            OpKind::E2 => cfg.p2,
            OpKind::C1 => 2,
        };
        let chosen = select_for_prompt(&state.archive, op, p, &mut state.rng);
        if chosen.is_empty() {
            log::info!("generation {gen}: {op} skipped, archive too small");
            skipped_ops.push(op);
            continue;
        }
        let req = PromptRequest {
            op,
            basic_content: basic.to_string(),
            individuals: chosen.iter().map(embed).collect(),
            request_info: request_info(),
        };
        prompts.push((op, render_prompt(&req)?));
    }

    let responses = backend.complete(gen, &prompts, cfg.parallel_responses)?;
    let mut bridge_failures = skipped_ops.len() * cfg.parallel_responses;
    // (id, op, parsed program) for each attempted candidate
    let mut attempted = Vec::new();
    for r in responses {
        let Some(text) = r.text else {
            bridge_failures += 1;
            continue;
        };
        let id = state.next_id;
        state.next_id += 1;
        attempted.push((id, r.op, parse_response(&text)));
    }

    let programs: Vec<String> = attempted
        .iter()
        .filter_map(|(_, _, p)| p.as_ref().ok().map(|p| p.program_text.clone()))
        .collect();
    let mut results = evaluator.evaluate(&programs).into_iter();

    let mut candidates = Vec::with_capacity(attempted.len());
    let mut fresh = Vec::new();
    for (id, op, parsed) in attempted {
        let result = match &parsed {
            Ok(_) => results.next().expect("one result per program"),
            Err(m) => FitResult::discarded(DiscardReason::Parse, m.to_string(), 0.0),
        };
        candidates.push(CandidateRecord {
            id,
            op,
            status: result.status,
            fitness: result.fitness,
            wall_seconds: result.wall_seconds,
        });
        if let (Ok(p), true) = (parsed, result.is_ok()) {
            fresh.push(Individual {
                id,
                ideas: p.ideas,
                program_text: p.program_text,
                fitness: result.fitness,
                origin: op.into(),
                generation_born: gen,
            });
        }
    }
    for ind in fresh {
        state.archive.insert(ind);
    }

    Ok(GenerationLog {
        gen,
        candidates,
        best_fitness: state.archive.best_fitness().unwrap_or(0.0),
        archive_size: state.archive.len(),
        bridge_failures,
        skipped_ops,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best: Individual,
    pub archive: Vec<Individual>,
    pub seeds: Vec<SeedOutcome>,
    pub generations: Vec<GenerationLog>,
    /// Row 0 describes the seed population.
    pub convergence: Vec<ConvergenceRow>,
}

impl SearchReport {
    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("gen,best,mean,evaluated_ok\n");
        for r in &self.convergence {
            let _ = writeln!(s, "{},{:.6},{:.6},{}", r.gen, r.best, r.mean, r.evaluated_ok);
        }
        s
    }
}

fn io_err(path: &Path, e: std::io::Error) -> SearchError {
    SearchError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), SearchError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Seeds the archive, runs `cfg.generations` generations and writes
/// `generations.jsonl`, `convergence.csv`, `best_program.txt` and
/// `archive.json` into `out_dir`.
pub fn run_search(
    cfg: &SearchConfig,
    graph: Arc<Graph>,
    split: Arc<Split>,
    backend: &Backend,
    out_dir: &Path,
) -> Result<SearchReport, SearchError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let log_path = out_dir.join("generations.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| io_err(&log_path, e))?;

    let basic = basic_content(&graph);
    let evaluator = PoolEvaluator {
        graph,
        split,
        train: cfg.train.clone(),
        workers: cfg.workers,
    };
    let (mut state, seeds) = init_population(cfg, &evaluator)?;
    let seeds_ok = seeds.iter().filter(|s| s.result.is_ok()).count();
    let mut convergence = vec![state.convergence(0, seeds_ok)];
    let mut generations = Vec::new();

    for gen in 1..=cfg.generations {
        let entry = run_generation(&mut state, backend, &evaluator, cfg, &basic, gen)?;
        log::info!(
            "generation {gen}: {} ok of {}, best {:.4}",
            entry.count(FitStatus::Ok),
            entry.candidates.len(),
            entry.best_fitness
        );
        let line = serde_json::to_string(&entry).expect("log serializes");
        writeln!(log_file, "{line}").map_err(|e| io_err(&log_path, e))?;
        convergence.push(state.convergence(gen, entry.count(FitStatus::Ok)));
        generations.push(entry);
    }

    let best = state.archive.best().expect("archive is non-empty").clone();
    let report = SearchReport {
        best,
        archive: state.archive.members().to_vec(),
        seeds,
        generations,
        convergence,
    };
    write_file(&out_dir.join("convergence.csv"), &report.convergence_csv())?;
    write_file(
        &out_dir.join("best_program.txt"),
        &format!("{}\n", report.best.program_text.trim_end()),
    )?;
    write_file(
        &out_dir.join("archive.json"),
        &serde_json::to_string_pretty(&report.archive).expect("archive serializes"),
    )?;
    Ok(report)
}
