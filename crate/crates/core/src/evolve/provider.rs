//! Sources of candidate genomes.
//!
//! The external provider speaks line-delimited JSON over a child process's
//! standard streams: one request line in, one genome object per line out.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, seeded};
use crate::variants::{crossover, mutate, Genome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mutate,
    Crossover,
    /// Crossover of two parents followed by a mutation half of the time,
    /// otherwise a mutation of the first parent.
    Mixed,
    /// Program and arguments of the child process.
    External(Vec<String>),
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("external provider has an empty command")]
    EmptyCommand,
    #[error("external provider i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("external provider exited with {0}")]
    Exit(std::process::ExitStatus),
}

/// Per-parent numbers handed to the provider alongside the genomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Feedback {
    pub genome: Genome,
    pub latency_us: Option<f64>,
    pub breakdown: std::collections::BTreeMap<String, f64>,
    pub vreg_utilization: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    parents: &'a [Genome],
    feedback: &'a [Feedback],
    seed: u64,
    count: usize,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Proposals {
    pub invalid_lines: usize,
}

/// One child per built-in proposal.
pub fn propose_builtin(kind: &ProviderKind, parents: &[Genome], seed: u64) -> Genome {
    let p1 = parents[0];
    let p2 = parents.get(1).copied().unwrap_or(p1);
    match kind {
        ProviderKind::Mutate => mutate(&p1, seed),
        // Recombining identical parents cannot move; mutate instead.
        ProviderKind::Crossover if p1 != p2 => crossover(&p1, &p2, seed),
        ProviderKind::Crossover => mutate(&p1, seed),
        _ => {
            let mut rng = seeded(seed);
            if p1 != p2 && rng.random_bool(0.5) {
                let child = crossover(&p1, &p2, derive_seed(seed, 1));
                if child == p1 || child == p2 || rng.random_bool(0.5) {
                    mutate(&child, derive_seed(seed, 2))
                } else {
                    child
                }
            } else {
                mutate(&p1, derive_seed(seed, 3))
            }
        }
    }
}

/// Run the external command once and collect up to `count` genomes.
/// Lines that do not parse as a valid genome are dropped and counted.
pub fn propose_external(
    command: &[String],
    parents: &[Genome],
    feedback: &[Feedback],
    seed: u64,
    count: usize,
) -> Result<(Vec<Genome>, Proposals), ProviderError> {
    let (program, args) = command.split_first().ok_or(ProviderError::EmptyCommand)?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let request = serde_json::to_string(&Request {
        parents,
        feedback,
        seed,
        count,
    })
    .expect("request serializes");
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        // A provider that exits without reading is reported via its status.
        let _ = writeln!(stdin, "{request}");
    }
    let stdout = child.stdout.take().expect("piped stdout");
    let mut out = Vec::new();
    let mut stats = Proposals::default();
    for line in BufReader::new(stdout).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Genome>(&line) {
            Ok(g) if out.len() < count => out.push(g),
            Ok(_) => {}
            Err(_) => stats.invalid_lines += 1,
        }
    }
    let status = child.wait()?;
    if !status.success() {
        return Err(ProviderError::Exit(status));
    }
    Ok((out, stats))
}
