//! Island-partitioned MAP-Elites search over kernel genomes.
//!
//! Each generation samples parents per island, proposes children, evaluates
//! them concurrently and admits them one at a time in proposal order, so a
//! modeled-mode run is a pure function of its configuration and seed.

mod db;
mod provider;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use db::{map_elites_bin, Bucket, Cell, Elite, Island, PopulationDb, UNIFORM_FLOOR};
pub use provider::{
    propose_builtin, propose_external, Feedback, Proposals, ProviderError, ProviderKind,
};

use crate::eval::{
    EvaluationReport, Evaluator, EvaluatorConfig, EvaluatorMode, GateResult, Target,
};
use crate::params::ParamSet;
use crate::rng::{derive_path, derive_seed};
use crate::variants::Genome;

/// Environment variable capping the evaluation worker pool.
pub const THREADS_ENV: &str = "FHEVOLVE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub islands: usize,
    /// Size of the parent pool: the top elites of an island by score.
    pub population_per_island: usize,
    pub generations: usize,
    pub migration_interval: usize,
    /// Children proposed per island per generation.
    pub proposals_per_generation: usize,
    pub evaluator_mode: EvaluatorMode,
    pub rng_seed: u64,
    pub kernel: Target,
    pub params_path: Option<PathBuf>,
    pub provider: ProviderKind,
    pub allow_insecure: bool,
    pub gate_seed: u64,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            islands: 4,
            population_per_island: 8,
            generations: 30,
            migration_interval: 5,
            proposals_per_generation: 8,
            evaluator_mode: EvaluatorMode::Modeled,
            rng_seed: 0,
            kernel: Target::BlindRotate,
            params_path: None,
            provider: ProviderKind::Mixed,
            allow_insecure: false,
            gate_seed: 0,
            reps: 5,
            warmup: 1,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("islands", self.islands),
            ("population_per_island", self.population_per_island),
            ("generations", self.generations),
            ("migration_interval", self.migration_interval),
            ("proposals_per_generation", self.proposals_per_generation),
        ] {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        }
        if matches!(&self.provider, ProviderKind::External(c) if c.is_empty()) {
            out.push("external provider needs a command".into());
        }
        out
    }

    pub fn evaluator_config(&self, params: ParamSet) -> EvaluatorConfig {
        EvaluatorConfig {
            target: self.kernel,
            params,
            allow_insecure: self.allow_insecure,
            mode: self.evaluator_mode,
            cost: Default::default(),
            gate_seed: self.gate_seed,
            reps: self.reps,
            warmup: self.warmup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub island: usize,
    pub proposals: usize,
    pub admissions: usize,
    pub invalid_proposals: usize,
    pub provider_errors: usize,
    pub best_score_so_far: f64,
    pub best_latency_us: f64,
    pub best_genome: Genome,
    /// Wall time of the whole generation; absent in modeled mode so that
    /// ledgers are reproducible byte for byte.
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("security gate refused the parameters: {}", .0.witness.as_deref().unwrap_or(""))]
    Security(GateResult),
    #[error("{0}")]
    Eval(#[from] crate::eval::EvalError),
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Elite,
    pub baseline: EvaluationReport,
    pub ledger: Vec<GenerationRecord>,
    pub db: PopulationDb,
}

pub fn run_search(config: &SearchConfig, params: ParamSet) -> Result<SearchResult, SearchError> {
    let problems = config.check();
    if !problems.is_empty() {
        return Err(SearchError::Config(problems.join("; ")));
    }
    let evaluator = Evaluator::new(config.evaluator_config(params))?;
    run_search_with(config, &evaluator)
}

/// Search with a caller-owned evaluator, sharing its gate cache across runs.
pub fn run_search_with(
    config: &SearchConfig,
    evaluator: &Evaluator,
) -> Result<SearchResult, SearchError> {
    let problems = config.check();
    if !problems.is_empty() {
        return Err(SearchError::Config(problems.join("; ")));
    }
    let ec = evaluator.config();
    if ec.target != config.kernel || ec.mode != config.evaluator_mode {
        return Err(SearchError::Config(format!(
            "evaluator is set up for {} / {}, search asks for {} / {}",
            ec.target, ec.mode, config.kernel, config.evaluator_mode
        )));
    }
    if !evaluator.security().passed {
        return Err(SearchError::Security(evaluator.security().clone()));
    }
    match worker_pool() {
        Some(pool) => pool.install(|| search_loop(config, evaluator)),
        None => search_loop(config, evaluator),
    }
}

fn worker_pool() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var(THREADS_ENV).ok()?.parse().ok()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .ok()
}

fn feedback(db: &PopulationDb, island: usize, parents: &[Genome]) -> Vec<Feedback> {
    parents
        .iter()
        .map(|g| {
            let report = db.islands[island]
                .cells
                .values()
                .find(|e| e.genome == *g)
                .map(|e| &e.report);
            Feedback {
                genome: *g,
                latency_us: report.and_then(|r| r.latency_us),
                breakdown: report.map(|r| r.breakdown.clone()).unwrap_or_default(),
                vreg_utilization: report.and_then(|r| r.vreg_utilization),
            }
        })
        .collect()
}

struct IslandBatch {
    children: Vec<Genome>,
    invalid: usize,
    provider_errors: usize,
}

fn propose_for_island(
    config: &SearchConfig,
    db: &PopulationDb,
    island: usize,
    seed: u64,
) -> IslandBatch {
    let count = config.proposals_per_generation;
    let pool = config.population_per_island;
    let reference = Genome::reference();
    let parent_sets: Vec<Vec<Genome>> = (0..count)
        .map(|p| db.sample_parents(island, 2, pool, derive_seed(seed, p as u64), reference))
        .collect();
    let builtin = |kind: &ProviderKind| -> Vec<Genome> {
        parent_sets
            .iter()
            .enumerate()
            .map(|(p, parents)| {
                propose_builtin(kind, parents, derive_seed(seed, 1_000_000 + p as u64))
            })
            .collect()
    };
    match &config.provider {
        ProviderKind::External(command) => {
            let parents = &parent_sets[0];
            let fb = feedback(db, island, parents);
            match propose_external(command, parents, &fb, seed, count) {
                Ok((children, stats)) => IslandBatch {
                    children,
                    invalid: stats.invalid_lines,
                    provider_errors: 0,
                },
                Err(_) => IslandBatch {
                    children: builtin(&ProviderKind::Mixed),
                    invalid: 0,
                    provider_errors: 1,
                },
            }
        }
        kind => IslandBatch {
            children: builtin(kind),
            invalid: 0,
            provider_errors: 0,
        },
    }
}

fn search_loop(config: &SearchConfig, evaluator: &Evaluator) -> Result<SearchResult, SearchError> {
    let k = config.islands;
    let baseline = evaluator.evaluate(Genome::reference());
    if !baseline.passed() {
        let why = baseline
            .first_failure()
            .and_then(|g| g.witness.clone())
            .unwrap_or_default();
        return Err(SearchError::Config(format!(
            "reference genome does not pass the gates: {why}"
        )));
    }
    let mut db = PopulationDb::new(k);
    for island in 0..k {
        db.admit(island, Genome::reference(), &baseline);
    }
    let measured = config.evaluator_mode == EvaluatorMode::Measured;
    let mut ledger = Vec::with_capacity(config.generations * k);

    for generation in 0..config.generations {
        let start = Instant::now();
        let batches: Vec<IslandBatch> = (0..k)
            .map(|island| {
                let seed = derive_path(config.rng_seed, &[generation as u64, island as u64]);
                propose_for_island(config, &db, island, seed)
            })
            .collect();
        let jobs: Vec<(usize, Genome)> = batches
            .iter()
            .enumerate()
            .flat_map(|(i, b)| b.children.iter().map(move |g| (i, *g)))
            .collect();
        let reports: Vec<EvaluationReport> = jobs
            .par_iter()
            .map(|(_, g)| evaluator.evaluate(*g))
            .collect();
        let wall_time_ms = measured.then(|| start.elapsed().as_secs_f64() * 1e3);

        let mut next = jobs.iter().zip(&reports);
        for (island, batch) in batches.iter().enumerate() {
            let mut admissions = 0;
            for ((_, genome), report) in next.by_ref().take(batch.children.len()) {
                admissions += db.admit(island, *genome, report) as usize;
            }
            let best = db.best().expect("seeded with the reference");
            ledger.push(GenerationRecord {
                generation,
                island,
                proposals: batch.children.len(),
                admissions,
                invalid_proposals: batch.invalid,
                provider_errors: batch.provider_errors,
                best_score_so_far: best.score(),
                best_latency_us: -best.score(),
                best_genome: best.genome,
                wall_time_ms,
            });
        }
        if (generation + 1) % config.migration_interval == 0 {
            db.migrate();
        }
    }
    let best = db.best().expect("seeded with the reference").clone();
    Ok(SearchResult {
        best,
        baseline,
        ledger,
        db,
    })
}

/// Best-scoring genome of `space` by direct evaluation of every point.
pub fn exhaustive_best(evaluator: &Evaluator, space: &[Genome]) -> Option<(Genome, f64)> {
    let reports: Vec<EvaluationReport> = space.par_iter().map(|g| evaluator.evaluate(*g)).collect();
    reports
        .into_iter()
        .filter_map(|r| r.score.map(|s| (r.genome, s)))
        .fold(None, |best, (g, s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((g, s)),
        })
}
