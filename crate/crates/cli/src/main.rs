//! `fhevolve`: run kernel searches, benchmark genomes, check parameter
//! files and summarize run directories.
//!
//! Exit codes: 0 success, 1 gate or validation failure, 2 usage or
//! configuration error, 3 security refusal.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fhevolve::eval::{
    security_gate, Evaluator, EvaluatorConfig, EvaluatorMode, GateResult, Target,
};
use fhevolve::evolve::{run_search_with, ProviderKind, SearchConfig, SearchError};
use fhevolve::params::ParamSet;
use fhevolve::rundir::RunDirectory;
use fhevolve::variants::Genome;

#[derive(Parser)]
#[command(
    name = "fhevolve",
    version,
    about = "Correctness-gated autotuning of toy FHE kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve kernel genomes and write a run directory.
    Search(SearchArgs),
    /// Gate and time a single genome; prints the evaluation report as JSON.
    Bench(BenchArgs),
    /// Baseline vs best-found table for a run directory.
    Report(ReportArgs),
    /// Check a parameter file against structural rules and the security table.
    ValidateParams(ValidateArgs),
    /// Re-check a run directory: the best genome against the gates and, for
    /// modeled runs, the ledger against a fresh run.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Measured,
    Modeled,
}

impl From<Mode> for EvaluatorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Measured => EvaluatorMode::Measured,
            Mode::Modeled => EvaluatorMode::Modeled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Mutate,
    Crossover,
    Mixed,
    External,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_parser = parse_target)]
    kernel: Target,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 4)]
    islands: usize,
    #[arg(long, default_value_t = 30)]
    generations: usize,
    #[arg(long, default_value_t = 8)]
    population: usize,
    #[arg(long, default_value_t = 8)]
    proposals: usize,
    #[arg(long, default_value_t = 5)]
    migration_interval: usize,
    #[arg(long, value_enum, default_value = "modeled")]
    evaluator: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    gate_seed: u64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    provider: Provider,
    /// Command line of the external provider, split on whitespace.
    #[arg(long)]
    provider_cmd: Option<String>,
    #[arg(long)]
    allow_insecure: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    genome: PathBuf,
    #[arg(long, value_parser = parse_target)]
    kernel: Target,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, value_enum, default_value = "measured")]
    evaluator: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    allow_insecure: bool,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
    /// Print CSV instead of markdown.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long)]
    allow_insecure: bool,
}

#[derive(Args)]
struct ReplayArgs {
    run_dir: PathBuf,
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse()
}

/// An error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn gate(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
    fn config(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
    fn security(error: anyhow::Error) -> Self {
        Self { code: 3, error }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
        Command::ValidateParams(a) => validate_params(a),
        Command::Replay(a) => replay(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_params(path: &Path) -> Result<ParamSet, Failure> {
    ParamSet::load(path)
        .with_context(|| format!("loading parameters from {}", path.display()))
        .map_err(Failure::config)
}

/// Build the evaluator and apply the security policy: refusal is exit 3, an
/// accepted override is announced on standard error.
fn gated_evaluator(cfg: EvaluatorConfig, source: &Path) -> Result<Evaluator, Failure> {
    let ev = Evaluator::new(cfg).map_err(|e| Failure::config(e.into()))?;
    let gate = ev.security();
    if !gate.passed {
        return Err(Failure::security(anyhow!(
            "security gate refused {}: {}",
            source.display(),
            gate.witness.as_deref().unwrap_or("")
        )));
    }
    if let Some(note) = &gate.note {
        eprintln!("warning: {}: {note}", source.display());
    }
    Ok(ev)
}

fn search(a: SearchArgs) -> Outcome {
    let provider = match (a.provider, &a.provider_cmd) {
        (Provider::Mutate, _) => ProviderKind::Mutate,
        (Provider::Crossover, _) => ProviderKind::Crossover,
        (Provider::Mixed, _) => ProviderKind::Mixed,
        (Provider::External, Some(cmd)) => {
            ProviderKind::External(cmd.split_whitespace().map(String::from).collect())
        }
        (Provider::External, None) => {
            return Err(Failure::config(anyhow!(
                "--provider external needs --provider-cmd"
            )))
        }
    };
    let params = load_params(&a.params)?;
    let cfg = SearchConfig {
        islands: a.islands,
        population_per_island: a.population,
        generations: a.generations,
        migration_interval: a.migration_interval,
        proposals_per_generation: a.proposals,
        evaluator_mode: a.evaluator.into(),
        rng_seed: a.seed,
        kernel: a.kernel,
        params_path: Some(a.params.clone()),
        provider,
        allow_insecure: a.allow_insecure,
        gate_seed: a.gate_seed,
        reps: a.reps,
        warmup: 1,
    };
    let problems = cfg.check();
    if !problems.is_empty() {
        return Err(Failure::config(anyhow!(problems.join("; "))));
    }
    let ev = gated_evaluator(cfg.evaluator_config(params.clone()), &a.params)?;
    let result = run_search_with(&cfg, &ev).map_err(|e| match e {
        SearchError::Security(_) => Failure::security(e.into()),
        _ => Failure::config(e.into()),
    })?;
    let cmp = RunDirectory::new(&a.out)
        .write(&cfg, &params, &result)
        .map_err(|e| Failure::config(e.into()))?;
    let invalid: usize = result.ledger.iter().map(|r| r.invalid_proposals).sum();
    let provider_errors: usize = result.ledger.iter().map(|r| r.provider_errors).sum();
    if invalid > 0 || provider_errors > 0 {
        eprintln!(
            "provider: {invalid} invalid proposal lines dropped, {provider_errors} failed calls replaced by built-in proposals"
        );
    }
    print!("{}", cmp.to_markdown());
    println!("\nRun directory: {}", a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let text = fs::read_to_string(&a.genome)
        .with_context(|| format!("reading {}", a.genome.display()))
        .map_err(Failure::config)?;
    let genome: Genome = serde_json::from_str(&text)
        .with_context(|| format!("parsing genome {}", a.genome.display()))
        .map_err(Failure::config)?;
    let params = load_params(&a.params)?;
    let cfg = EvaluatorConfig {
        allow_insecure: a.allow_insecure,
        mode: a.evaluator.into(),
        gate_seed: a.seed,
        reps: a.reps,
        warmup: a.warmup,
        ..EvaluatorConfig::new(a.kernel, params)
    };
    let ev = gated_evaluator(cfg, &a.params)?;
    let report = ev.evaluate(genome);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    match report.first_failure() {
        None => Ok(()),
        Some(g) => Err(Failure::gate(anyhow!(
            "gate failed: {}",
            serde_json::to_string(g).expect("gate serializes")
        ))),
    }
}

fn report(a: ReportArgs) -> Outcome {
    let cmp = RunDirectory::new(&a.run_dir)
        .compare()
        .map_err(|e| Failure::config(e.into()))?;
    if a.csv {
        print!("{}", cmp.to_csv());
    } else {
        print!("{}", cmp.to_markdown());
    }
    Ok(())
}

fn describe(g: &GateResult) -> String {
    match (&g.witness, &g.note) {
        (Some(w), _) => w.clone(),
        (None, Some(n)) => n.clone(),
        (None, None) => String::new(),
    }
}

fn validate_params(a: ValidateArgs) -> Outcome {
    let params = load_params(&a.file)?;
    let problems = params.check();
    if problems.is_empty() {
        println!("structure: pass");
    } else {
        println!("structure: fail");
        for p in &problems {
            println!("  - {p}");
        }
    }
    let gate = security_gate(&params, a.allow_insecure);
    let verdict = if gate.passed { "pass" } else { "fail" };
    let detail = describe(&gate);
    if detail.is_empty() {
        println!("security: {verdict}");
    } else {
        println!("security: {verdict} ({detail})");
    }
    if problems.is_empty() && gate.passed {
        Ok(())
    } else {
        Err(Failure::gate(anyhow!(
            "{} is not acceptable",
            a.file.display()
        )))
    }
}

fn replay(a: ReplayArgs) -> Outcome {
    let dir = RunDirectory::new(&a.run_dir);
    let config = dir.read_config().map_err(|e| Failure::config(e.into()))?;
    let ledger = dir.read_ledger().map_err(|e| Failure::config(e.into()))?;
    let best = dir.read_best().map_err(|e| Failure::config(e.into()))?;
    dir.compare().map_err(|e| Failure::config(e.into()))?;
    let source = config
        .search
        .params_path
        .clone()
        .unwrap_or_else(|| a.run_dir.join("config.json"));
    let ev = gated_evaluator(
        config.search.evaluator_config(config.params.clone()),
        &source,
    )?;
    let fresh = ev.evaluate(best.genome);
    if let Some(g) = fresh.first_failure() {
        return Err(Failure::gate(anyhow!(
            "best genome {} no longer passes the {} gate: {}",
            best.genome,
            g.gate,
            describe(g)
        )));
    }
    println!("best genome {} passes every gate", best.genome);
    if config.search.evaluator_mode == EvaluatorMode::Modeled {
        let rerun = run_search_with(&config.search, &ev).map_err(|e| Failure::config(e.into()))?;
        if rerun.ledger != ledger || rerun.best.genome != best.genome {
            return Err(Failure::gate(anyhow!(
                "a fresh modeled run does not reproduce the stored ledger"
            )));
        }
        println!("ledger reproduced ({} records)", ledger.len());
    }
    Ok(())
}
