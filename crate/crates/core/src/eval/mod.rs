//! Candidate evaluation: a security gate, three correctness tiers and a
//! latency score.
//!
//! A genome is scored only after every gate passes. Gates run in a fixed
//! order and stop at the first failure, which is reported with a witness.

pub mod cost;
pub mod gates;
pub mod security;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{
    cost_breakdown, cost_model_latency, vreg_utilization, CostBreakdown, CostModelConfig,
};
pub use gates::Workload;
pub use security::{security_gate, security_table, within_standard};

use crate::ckks;
use crate::params::ParamSet;
use crate::tfhe;
use crate::variants::{Genome, KernelDescriptor, OpKind, PolyKernel, VariantKernel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("target {target} needs {expected} parameters, found {found}")]
    Scheme {
        target: Target,
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid cost model: {0}")]
    CostModel(String),
    #[error("workload could not be built: {0}")]
    Workload(String),
    #[error("kernel failed: {0}")]
    Kernel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Security,
    Unit,
    Module,
    EndToEnd,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::Security => "security",
            Gate::Unit => "unit",
            Gate::Module => "module",
            Gate::EndToEnd => "end_to_end",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: Gate,
    pub passed: bool,
    pub witness: Option<String>,
    pub note: Option<String>,
}

impl GateResult {
    pub fn pass(gate: Gate) -> Self {
        Self {
            gate,
            passed: true,
            witness: None,
            note: None,
        }
    }

    pub fn fail(gate: Gate, witness: String) -> Self {
        Self {
            gate,
            passed: false,
            witness: Some(witness),
            note: None,
        }
    }

    pub fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

/// The operation a search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    BlindRotate,
    ExternalProduct,
    HeMul,
    HeRot,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::BlindRotate,
        Target::ExternalProduct,
        Target::HeMul,
        Target::HeRot,
    ];

    pub fn scheme(self) -> &'static str {
        match self {
            Target::BlindRotate | Target::ExternalProduct => "tfhe",
            Target::HeMul | Target::HeRot => "ckks",
        }
    }

    pub fn op_kind(self) -> OpKind {
        match self {
            Target::BlindRotate => OpKind::BlindRotateLoop,
            Target::ExternalProduct => OpKind::ExternalProduct,
            Target::HeMul | Target::HeRot => OpKind::CkksKeyswitchInner,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::BlindRotate => "blind-rotate",
            Target::ExternalProduct => "external-product",
            Target::HeMul => "he-mul",
            Target::HeRot => "he-rot",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                format!("unknown target {s:?}; expected blind-rotate, external-product, he-mul or he-rot")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorMode {
    /// Wall-clock timing of the real workload.
    Measured,
    /// The deterministic cost model.
    Modeled,
}

impl FromStr for EvaluatorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "measured" => Ok(Self::Measured),
            "modeled" => Ok(Self::Modeled),
            _ => Err(format!("unknown mode {s:?}; expected measured or modeled")),
        }
    }
}

impl fmt::Display for EvaluatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Measured => "measured",
            Self::Modeled => "modeled",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    pub target: Target,
    pub params: ParamSet,
    pub allow_insecure: bool,
    pub mode: EvaluatorMode,
    pub cost: CostModelConfig,
    /// Seeds the workload keys and every gate's random inputs.
    pub gate_seed: u64,
    pub reps: usize,
    pub warmup: usize,
}

impl EvaluatorConfig {
    pub fn new(target: Target, params: ParamSet) -> Self {
        Self {
            target,
            params,
            allow_insecure: false,
            mode: EvaluatorMode::Modeled,
            cost: CostModelConfig::default(),
            gate_seed: 0,
            reps: 5,
            warmup: 1,
        }
    }
}

/// Latency split by stage (measured) or cost term (modeled), in
/// microseconds; the values sum to the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub latency_us: f64,
    pub breakdown: BTreeMap<String, f64>,
    pub vreg_utilization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub genome: Genome,
    pub kernel: String,
    pub target: Target,
    pub mode: EvaluatorMode,
    pub gates: Vec<GateResult>,
    pub latency_us: Option<f64>,
    pub breakdown: BTreeMap<String, f64>,
    pub vreg_utilization: Option<f64>,
    /// `-latency_us`, present only when every gate passed.
    pub score: Option<f64>,
}

impl EvaluationReport {
    pub fn passed(&self) -> bool {
        self.score.is_some()
    }

    pub fn first_failure(&self) -> Option<&GateResult> {
        self.gates.iter().find(|g| !g.passed)
    }
}

/// Serializes timings so concurrent workers never overlap measurements.
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

pub struct Evaluator {
    config: EvaluatorConfig,
    security: GateResult,
    workload: OnceLock<Result<Workload, String>>,
    gate_cache: Mutex<HashMap<Genome, Vec<GateResult>>>,
}

impl Evaluator {
    pub fn new(config: EvaluatorConfig) -> Result<Self, EvalError> {
        let found = config.params.scheme();
        if found != config.target.scheme() {
            return Err(EvalError::Scheme {
                target: config.target,
                expected: config.target.scheme(),
                found,
            });
        }
        let problems = config.params.check();
        if !problems.is_empty() {
            return Err(EvalError::Params(problems.join("; ")));
        }
        let problems = config.cost.check();
        if !problems.is_empty() {
            return Err(EvalError::CostModel(problems.join("; ")));
        }
        let security = security_gate(&config.params, config.allow_insecure);
        Ok(Self {
            config,
            security,
            workload: OnceLock::new(),
            gate_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EvaluatorConfig {
        &self.config
    }

    pub fn security(&self) -> &GateResult {
        &self.security
    }

    pub fn descriptor(&self, genome: Genome) -> KernelDescriptor {
        match &self.config.params {
            ParamSet::Tfhe(p) => tfhe::kernel_descriptor(p, self.config.target.op_kind(), genome),
            ParamSet::Ckks(p) => ckks::kernel_descriptor(p, genome),
        }
    }

    /// Keys and ciphertexts, built on first use and only once the
    /// security gate has passed.
    pub fn workload(&self) -> Result<&Workload, EvalError> {
        if !self.security.passed {
            return Err(EvalError::Workload(
                "security gate failed; no workload is built".into(),
            ));
        }
        self.workload
            .get_or_init(|| Workload::build(&self.config.params, self.config.gate_seed))
            .as_ref()
            .map_err(|e| EvalError::Workload(e.clone()))
    }

    pub fn correctness_gate(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        tier: Gate,
        seed: u64,
    ) -> GateResult {
        let workload = match self.workload() {
            Ok(w) => w,
            Err(e) => return GateResult::fail(tier, e.to_string()),
        };
        match tier {
            Gate::Security => self.security.clone(),
            Gate::Unit => gates::unit_gate(kernel, desc, workload, seed),
            Gate::Module => gates::module_gate(kernel, desc, self.config.target, workload, seed),
            Gate::EndToEnd => gates::end_to_end_gate(kernel, desc, workload, seed),
        }
    }

    /// Unit, module and end-to-end tiers in order, stopping at the first
    /// failure.
    pub fn run_gates(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        seed: u64,
    ) -> Vec<GateResult> {
        let mut out = Vec::with_capacity(3);
        for tier in [Gate::Unit, Gate::Module, Gate::EndToEnd] {
            let r = self.correctness_gate(kernel, desc, tier, seed);
            let stop = !r.passed;
            out.push(r);
            if stop {
                break;
            }
        }
        out
    }

    /// Evaluate a genome with the configured gate seed. Gate outcomes are
    /// deterministic for a fixed seed and are cached per genome.
    pub fn evaluate(&self, genome: Genome) -> EvaluationReport {
        let desc = self.descriptor(genome);
        match VariantKernel::new(desc) {
            Ok(kernel) => self.evaluate_inner(&kernel, &desc, self.config.gate_seed, true),
            Err(e) => self.rejected(
                &desc,
                "variant".into(),
                vec![
                    self.security.clone(),
                    GateResult::fail(Gate::Unit, e.to_string()),
                ],
            ),
        }
    }

    /// Evaluate an arbitrary kernel (for example a deliberately broken
    /// one) in place of the genome's variant, with explicit gate inputs.
    pub fn evaluate_kernel(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        seed: u64,
    ) -> EvaluationReport {
        self.evaluate_inner(kernel, desc, seed, false)
    }

    fn evaluate_inner(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        seed: u64,
        cache: bool,
    ) -> EvaluationReport {
        if !self.security.passed {
            return self.rejected(desc, kernel.name(), vec![self.security.clone()]);
        }
        let cached = if cache {
            self.gate_cache
                .lock()
                .expect("gate cache")
                .get(&desc.genome)
                .cloned()
        } else {
            None
        };
        let tiers = match cached {
            Some(t) => t,
            None => {
                let t = self.run_gates(kernel, desc, seed);
                if cache {
                    self.gate_cache
                        .lock()
                        .expect("gate cache")
                        .insert(desc.genome, t.clone());
                }
                t
            }
        };
        let mut gates = vec![self.security.clone()];
        gates.extend(tiers);
        if gates.iter().any(|g| !g.passed) {
            return self.rejected(desc, kernel.name(), gates);
        }
        match self.profile(kernel, desc, self.config.mode) {
            Ok(p) => EvaluationReport {
                genome: desc.genome,
                kernel: kernel.name(),
                target: self.config.target,
                mode: self.config.mode,
                gates,
                latency_us: Some(p.latency_us),
                breakdown: p.breakdown,
                vreg_utilization: Some(p.vreg_utilization),
                score: Some(-p.latency_us),
            },
            Err(e) => {
                gates.push(GateResult::fail(Gate::EndToEnd, e.to_string()));
                self.rejected(desc, kernel.name(), gates)
            }
        }
    }

    fn rejected(
        &self,
        desc: &KernelDescriptor,
        kernel: String,
        gates: Vec<GateResult>,
    ) -> EvaluationReport {
        EvaluationReport {
            genome: desc.genome,
            kernel,
            target: self.config.target,
            mode: self.config.mode,
            gates,
            latency_us: None,
            breakdown: BTreeMap::new(),
            vreg_utilization: None,
            score: None,
        }
    }

    /// Latency with a per-stage or per-term split.
    pub fn profile(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        mode: EvaluatorMode,
    ) -> Result<Profile, EvalError> {
        let utilization = vreg_utilization(desc, &self.config.cost);
        match mode {
            EvaluatorMode::Modeled => {
                let cfg = &self.config.cost;
                let terms = cost_breakdown(desc, cfg);
                Ok(Profile {
                    latency_us: cfg.cycles_to_us(terms.total()),
                    breakdown: terms
                        .to_map()
                        .into_iter()
                        .map(|(k, v)| (k, cfg.cycles_to_us(v)))
                        .collect(),
                    vreg_utilization: utilization,
                })
            }
            EvaluatorMode::Measured => {
                let (total, stages) =
                    self.measure_stages(kernel, desc, self.config.reps, self.config.warmup)?;
                let sum: f64 = stages.values().sum();
                let breakdown = stages
                    .into_iter()
                    .map(|(k, v)| {
                        let share = if sum > 0.0 { v / sum } else { 0.0 };
                        (k, share * total)
                    })
                    .collect();
                Ok(Profile {
                    latency_us: total,
                    breakdown,
                    vreg_utilization: utilization,
                })
            }
        }
    }

    /// Median wall-clock microseconds of the target operation.
    pub fn measure_latency(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        reps: usize,
        warmup: usize,
    ) -> Result<f64, EvalError> {
        Ok(self.measure_stages(kernel, desc, reps, warmup)?.0)
    }

    fn measure_stages(
        &self,
        kernel: &dyn PolyKernel,
        desc: &KernelDescriptor,
        reps: usize,
        warmup: usize,
    ) -> Result<(f64, BTreeMap<String, f64>), EvalError> {
        let workload = self.workload()?;
        let reps = reps.max(3);
        let unroll = desc.genome.unroll_factor as usize;
        let _guard = MEASURE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        let mut totals = Vec::with_capacity(reps);
        let mut per_stage: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for rep in 0..warmup + reps {
            let stages = run_stages(workload, self.config.target, kernel, unroll)?;
            if rep < warmup {
                continue;
            }
            totals.push(stages.iter().map(|(_, t)| t).sum());
            for (name, t) in stages {
                per_stage.entry(name.to_string()).or_default().push(t);
            }
        }
        let stages = per_stage
            .into_iter()
            .map(|(k, mut v)| (k, median(&mut v)))
            .collect();
        Ok((median(&mut totals), stages))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e6)
}

/// One instrumented run of the target operation; stage times in
/// microseconds.
fn run_stages(
    workload: &Workload,
    target: Target,
    kernel: &dyn PolyKernel,
    unroll: usize,
) -> Result<Vec<(&'static str, f64)>, EvalError> {
    let err = |e: &dyn fmt::Display| EvalError::Kernel(e.to_string());
    match workload {
        Workload::Tfhe(w) => {
            let p = &w.params;
            let ct = &w.inputs[0];
            let (acc, t_rot) =
                timed(|| tfhe::blind_rotate_with(&w.lut, ct, &w.keys, p, kernel, unroll));
            let acc = acc.map_err(|e| err(&e))?;
            let (lwe, t_ext) = timed(|| tfhe::sample_extract(&acc, 0));
            let lwe = lwe.map_err(|e| err(&e))?;
            let (out, t_ks) = timed(|| tfhe::key_switch(&lwe, &w.keys.ksk, p));
            out.map_err(|e| err(&e))?;
            Ok(vec![
                ("blind_rotate", t_rot),
                ("sample_extract", t_ext),
                ("key_switch", t_ks),
            ])
        }
        Workload::Ckks(w) => {
            let [ca, cb, _] = &w.cts;
            match target {
                Target::HeRot => {
                    let rot = gates::CKKS_ROTATIONS[0];
                    let (rotated, t_auto) = timed(|| ckks::automorphism_ct(ca, rot));
                    let rotated = rotated.map_err(|e| err(&e))?;
                    let k = ckks::galois_element(rot, w.params.ring_degree);
                    let evk = w.keys.rotation_key(k).map_err(|e| err(&e))?;
                    let (u, t_ks) = timed(|| ckks::key_switch(&rotated.c1, evk, kernel));
                    let (u0, u1) = u.map_err(|e| err(&e))?;
                    let (down, t_down) = timed(|| {
                        let c0 = rotated.c0.add(&ckks::approx_mod_down(&u0)?)?;
                        let c1 = ckks::approx_mod_down(&u1)?;
                        Ok::<_, ckks::CkksError>((c0, c1))
                    });
                    down.map_err(|e| err(&e))?;
                    Ok(vec![
                        ("automorphism", t_auto),
                        ("key_switch", t_ks),
                        ("mod_down", t_down),
                    ])
                }
                _ => {
                    let (d, t_tensor) = timed(|| ckks::tensor_multiply(ca, cb));
                    let (d0, d1, d2) = d.map_err(|e| err(&e))?;
                    let (u, t_ks) = timed(|| ckks::key_switch(&d2, &w.keys.relin, kernel));
                    let (u0, u1) = u.map_err(|e| err(&e))?;
                    let (out, t_down) = timed(|| {
                        let ct = ckks::CkksCiphertext {
                            c0: d0.add(&ckks::approx_mod_down(&u0)?)?,
                            c1: d1.add(&ckks::approx_mod_down(&u1)?)?,
                            scale: ca.scale * cb.scale,
                        };
                        ckks::rescale(&ct)
                    });
                    out.map_err(|e| err(&e))?;
                    Ok(vec![
                        ("tensor", t_tensor),
                        ("key_switch", t_ks),
                        ("mod_down_rescale", t_down),
                    ])
                }
            }
        }
    }
}
