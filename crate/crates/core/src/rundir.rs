//! On-disk layout of a search run: `config.json`, `ledger.jsonl`,
//! `best.json`, `report.md` and `report.csv`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvaluationReport, Target};
use crate::evolve::{GenerationRecord, SearchConfig, SearchResult};
use crate::params::ParamSet;
use crate::variants::{Genome, Schedule};

pub const CONFIG_FILE: &str = "config.json";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const BEST_FILE: &str = "best.json";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, msg: impl Into<String>) -> RunDirError {
    RunDirError::Corrupt {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub search: SearchConfig,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestRecord {
    pub genome: Genome,
    pub report: EvaluationReport,
    pub baseline: EvaluationReport,
}

/// Plain-language description of what changed from `from` to `to`.
pub fn describe_changes(from: &Genome, to: &Genome) -> Vec<String> {
    let mut out = Vec::new();
    if from.unroll_factor != to.unroll_factor {
        out.push(format!(
            "unroll {}→{}",
            from.unroll_factor, to.unroll_factor
        ));
    }
    if from.tile_split != to.tile_split {
        out.push(format!("tile split {}→{}", from.tile_split, to.tile_split));
    }
    if from.lane_width_bits != to.lane_width_bits {
        out.push(format!(
            "lane width {}→{} bits",
            from.lane_width_bits, to.lane_width_bits
        ));
    }
    if from.elide_cast != to.elide_cast {
        out.push(
            if to.elide_cast {
                "cast elided"
            } else {
                "cast restored"
            }
            .into(),
        );
    }
    if from.schedule != to.schedule {
        let name = |s: Schedule| match s {
            Schedule::Serial => "serial",
            Schedule::Interleaved => "interleaved",
        };
        out.push(format!(
            "schedule {}→{}",
            name(from.schedule),
            name(to.schedule)
        ));
    }
    if from.hoist_params != to.hoist_params {
        out.push(
            if to.hoist_params {
                "parameters hoisted"
            } else {
                "parameter hoisting removed"
            }
            .into(),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub kernel: Target,
    pub baseline_genome: Genome,
    pub best_genome: Genome,
    pub baseline_latency_us: f64,
    pub best_latency_us: f64,
    pub speedup: f64,
    pub changes: Vec<String>,
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let changes = if self.changes.is_empty() {
            "none".to_string()
        } else {
            self.changes.join(", ")
        };
        format!(
            "# Search report: {}\n\n\
             | variant | genome | latency (us) | speedup |\n\
             |---|---|---|---|\n\
             | baseline | {} | {:.3} | 1.00x |\n\
             | best found | {} | {:.3} | {:.2}x |\n\n\
             Changes: {}\n",
            self.kernel,
            self.baseline_genome,
            self.baseline_latency_us,
            self.best_genome,
            self.best_latency_us,
            self.speedup,
            changes
        )
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = [
            ["variant", "genome", "latency_us", "speedup", "changes"].map(String::from),
            [
                "baseline".into(),
                self.baseline_genome.to_string(),
                self.baseline_latency_us.to_string(),
                "1".into(),
                String::new(),
            ],
            [
                "best".into(),
                self.best_genome.to_string(),
                self.best_latency_us.to_string(),
                self.speedup.to_string(),
                self.changes.join("; "),
            ],
        ];
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

pub struct RunDirectory {
    pub path: PathBuf,
}

impl RunDirectory {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write_file(&self, name: &str, text: &str) -> Result<(), RunDirError> {
        let p = self.file(name);
        fs::write(&p, text).map_err(io_err(&p))
    }

    pub fn write(
        &self,
        search: &SearchConfig,
        params: &ParamSet,
        result: &SearchResult,
    ) -> Result<Comparison, RunDirError> {
        fs::create_dir_all(&self.path).map_err(io_err(&self.path))?;
        let config = RunConfig {
            search: search.clone(),
            params: params.clone(),
        };
        self.write_file(CONFIG_FILE, &to_json(&config))?;
        let mut ledger = String::new();
        for rec in &result.ledger {
            ledger.push_str(&serde_json::to_string(rec).expect("record serializes"));
            ledger.push('\n');
        }
        self.write_file(LEDGER_FILE, &ledger)?;
        let best = BestRecord {
            genome: result.best.genome,
            report: result.best.report.clone(),
            baseline: result.baseline.clone(),
        };
        self.write_file(BEST_FILE, &to_json(&best))?;
        let cmp = self.compare()?;
        self.write_file(REPORT_MD, &cmp.to_markdown())?;
        self.write_file(REPORT_CSV, &cmp.to_csv())?;
        Ok(cmp)
    }

    pub fn read_config(&self) -> Result<RunConfig, RunDirError> {
        let p = self.file(CONFIG_FILE);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        serde_json::from_str(&text).map_err(|e| corrupt(&p, e.to_string()))
    }

    pub fn read_best(&self) -> Result<BestRecord, RunDirError> {
        let p = self.file(BEST_FILE);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        serde_json::from_str(&text).map_err(|e| corrupt(&p, e.to_string()))
    }

    /// Every line must parse; an empty ledger is an error.
    pub fn read_ledger(&self) -> Result<Vec<GenerationRecord>, RunDirError> {
        let p = self.file(LEDGER_FILE);
        let f = fs::File::open(&p).map_err(io_err(&p))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(&p))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| corrupt(&p, format!("line {}: {e}", i + 1)))?;
            out.push(rec);
        }
        if out.is_empty() {
            return Err(corrupt(&p, "ledger is empty"));
        }
        Ok(out)
    }

    /// Baseline against the best found, recomputed from the ledger and
    /// cross-checked with `best.json`.
    pub fn compare(&self) -> Result<Comparison, RunDirError> {
        let ledger = self.read_ledger()?;
        let best = self.read_best()?;
        let ledger_path = self.file(LEDGER_FILE);
        for w in ledger.windows(2) {
            if w[1].best_score_so_far < w[0].best_score_so_far {
                return Err(corrupt(&ledger_path, "best score decreases"));
            }
        }
        let last = ledger.last().expect("non-empty");
        let best_latency = last.best_latency_us;
        let best_path = self.file(BEST_FILE);
        let stored = best
            .report
            .latency_us
            .ok_or_else(|| corrupt(&best_path, "best genome has no latency"))?;
        if last.best_genome != best.genome || (stored - best_latency).abs() > 1e-9 * stored.abs() {
            return Err(corrupt(
                &best_path,
                "best genome disagrees with the final ledger entry",
            ));
        }
        let baseline_latency = best
            .baseline
            .latency_us
            .ok_or_else(|| corrupt(&best_path, "baseline has no latency"))?;
        Ok(Comparison {
            kernel: best.report.target,
            baseline_genome: best.baseline.genome,
            best_genome: best.genome,
            baseline_latency_us: baseline_latency,
            best_latency_us: best_latency,
            speedup: baseline_latency / best_latency,
            changes: describe_changes(&best.baseline.genome, &best.genome),
        })
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}
