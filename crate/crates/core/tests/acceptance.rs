//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the summary is always printed; exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use fhevolve::ckks;
use fhevolve::eval::{
    cost_model_latency, CostModelConfig, Evaluator, EvaluatorConfig, Gate, Target,
};
use fhevolve::evolve::{exhaustive_best, run_search_with, SearchConfig};
use fhevolve::modring::{
    negacyclic_polymul_ref, toeplitz_polymul, RingParams, RingPoly, MAX_MODULUS,
};
use fhevolve::params::{CkksParams, ParamSet, SecurityFlag, TfheParams};
use fhevolve::rng::{derive_seed, seeded};
use fhevolve::rundir::RunDirectory;
use fhevolve::tfhe;
use fhevolve::variants::{default_space, Genome, OpKind, ZeroingKernel};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!(
            "took {:.1}s, limit {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        )
    })
}

/// Signed schoolbook product in i128, reduced at the end.
fn convolution_oracle(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    let n = a.len();
    let q = q as i128;
    let mut out = vec![0i128; n];
    for i in 0..n {
        for j in 0..n {
            let p = (a[i] as i128 * b[j] as i128) % q;
            if i + j < n {
                out[i + j] = (out[i + j] + p) % q;
            } else {
                out[i + j - n] = (out[i + j - n] - p) % q;
            }
        }
    }
    out.into_iter().map(|v| v.rem_euclid(q) as u64).collect()
}

fn toeplitz_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded(1);
    let mut count = 0;
    for log_n in 1..=8 {
        let n = 1usize << log_n;
        for _ in 0..100 {
            let q = rng.random_range(2..=MAX_MODULUS);
            let ring = RingParams::new(n, q).unwrap();
            let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            let pa = RingPoly::new(ring, a.clone()).unwrap();
            let pb = RingPoly::new(ring, b.clone()).unwrap();
            let t = toeplitz_polymul(&pa, &pb).unwrap();
            let r = negacyclic_polymul_ref(&pa, &pb).unwrap();
            ensure(t == r, || {
                format!("n={n} q={q}: toeplitz differs from schoolbook")
            })?;
            ensure(
                t.coeffs() == convolution_oracle(&a, &b, q).as_slice(),
                || format!("n={n} q={q}: differs from i128 convolution"),
            )?;
            count += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{count} instances bitwise equal, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

type Table = (&'static str, fn(u64) -> u64);

fn lut_tables() -> Vec<Table> {
    vec![
        ("identity", |m| m),
        ("zero", |_| 0),
        ("seven", |_| 7),
        ("negate", |m| (8 - m) % 8),
        ("complement", |m| 7 - m),
        ("inc", |m| (m + 1) % 8),
        ("dec", |m| (m + 7) % 8),
        ("add3", |m| (m + 3) % 8),
        ("double", |m| (2 * m) % 8),
        ("triple", |m| (3 * m) % 8),
        ("square", |m| (m * m) % 8),
        ("cube", |m| (m * m * m) % 8),
        ("half", |m| m / 2),
        ("min3", |m| m.min(3)),
        ("max4", |m| m.max(4)),
        ("is_zero", |m| (m == 0) as u64),
        ("ge4", |m| (m >= 4) as u64),
        ("parity", |m| (m.count_ones() % 2) as u64),
        ("popcount", |m| m.count_ones() as u64),
        ("and_hi_bits", |m| (m >> 2) & (m >> 1) & 1),
        ("or_lo_bits", |m| (m | (m >> 1)) & 1),
        ("xor5", |m| m ^ 5),
        ("rotl", |m| ((m << 1) | (m >> 2)) & 7),
        ("gray", |m| m ^ (m >> 1)),
    ]
}

fn tfhe_lut_suite() -> Verdict {
    let start = Instant::now();
    let p = TfheParams::toy();
    let tables = lut_tables();
    let space = default_space();
    let mut runs = 0;
    for seed in 0..5u64 {
        let (lwe, _, keys) = tfhe::keygen(&p, derive_seed(500, seed));
        // Alternate genomes across seeds; the reference on the first.
        let genome = if seed == 0 {
            Genome::reference()
        } else {
            space[(seed as usize * 61) % space.len()]
        };
        for (name, f) in &tables {
            let lut = tfhe::Lut::from_fn(&p, *f).unwrap();
            for m in 0..8 {
                let ct = tfhe::lwe_encrypt(m, &lwe, &p, derive_seed(seed, 100 + m)).unwrap();
                let out = tfhe::bootstrap(&ct, &lut, &keys, &p, genome).unwrap();
                let got = tfhe::lwe_decrypt(&out, &lwe, &p).unwrap();
                ensure(got == f(m), || {
                    format!("seed {seed} genome {genome} lut {name}: f({m}) decrypted to {got}, expected {}", f(m))
                })?;
                runs += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} LUTs x 8 inputs x 5 seeds = {runs} bootstraps, 0 failures, {:.1}s",
        tables.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn random_slots(rng: &mut impl Rng, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn rel_err(got: &[Complex64], want: &[Complex64]) -> f64 {
    let mag = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let err = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    err / mag
}

fn ckks_fidelity() -> Verdict {
    const TOL: f64 = 1e-3;
    let start = Instant::now();
    let p = CkksParams::toy();
    let rotations = [1, 2, 3, 4, 5, 7];
    let keys = ckks::keygen(&p, 900, &rotations);
    let g = Genome::reference();
    let mut rng = seeded(901);
    let slots = p.slot_count();
    let enc = |v: &[Complex64], seed: u64| {
        let pt = ckks::encode(v, p.scale(), &p, p.levels()).unwrap();
        ckks::encrypt(&pt, p.scale(), &keys.secret, &p, seed)
    };
    let dec = |ct: &ckks::CkksCiphertext| ckks::decode(&ckks::decrypt(ct, &keys.secret), ct.scale);
    let mut worst: f64 = 0.0;
    for t in 0..50u64 {
        let a = random_slots(&mut rng, slots);
        let b = random_slots(&mut rng, slots);
        let prod = ckks::he_mul(&enc(&a, 2 * t), &enc(&b, 2 * t + 1), &keys.relin, &p, g).unwrap();
        let want: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let e = rel_err(&dec(&prod), &want);
        ensure(e < TOL, || {
            format!("he_mul vector {t}: relative error {e:.2e}")
        })?;
        worst = worst.max(e);
    }
    for t in 0..50u64 {
        let a = random_slots(&mut rng, slots);
        let rot = rotations[t as usize % rotations.len()];
        let ct = ckks::he_rot(&enc(&a, 1000 + t), rot, &keys, &p, g).unwrap();
        let mut want = a.clone();
        want.rotate_left(rot);
        let e = rel_err(&dec(&ct), &want);
        ensure(e < TOL, || {
            format!("he_rot vector {t} by {rot}: relative error {e:.2e}")
        })?;
        worst = worst.max(e);
    }
    for (r1, r2) in [(1, 2), (2, 3), (3, 4), (1, 4), (2, 5)] {
        let a = random_slots(&mut rng, slots);
        let ct = enc(&a, 2000 + r1 as u64 * 10 + r2 as u64);
        let composed = ckks::he_rot(
            &ckks::he_rot(&ct, r2, &keys, &p, g).unwrap(),
            r1,
            &keys,
            &p,
            g,
        )
        .unwrap();
        let direct = ckks::he_rot(&ct, r1 + r2, &keys, &p, g).unwrap();
        let (dc, dd) = (dec(&composed), dec(&direct));
        let mut want = a.clone();
        want.rotate_left(r1 + r2);
        let e1 = rel_err(&dc, &dd);
        let e2 = rel_err(&dc, &want);
        ensure(e1 < TOL && e2 < TOL, || {
            format!(
                "rot {r1} after rot {r2} vs rot {}: {e1:.2e} / {e2:.2e}",
                r1 + r2
            )
        })?;
        worst = worst.max(e1).max(e2);
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "50 he_mul + 50 he_rot + 5 compositions, worst relative error {worst:.2e}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn insecure_ok(target: Target, params: ParamSet) -> Evaluator {
    let mut cfg = EvaluatorConfig::new(target, params);
    cfg.allow_insecure = true;
    Evaluator::new(cfg).unwrap()
}

fn genome_invariance() -> Verdict {
    let start = Instant::now();
    let space = default_space();

    // Blind rotation over every TFHE genome that passes the gates.
    let tp = TfheParams::toy();
    let ev = insecure_ok(Target::BlindRotate, ParamSet::Tfhe(tp.clone()));
    let (lwe, _, keys) = tfhe::keygen(&tp, 42);
    let lut = tfhe::Lut::from_fn(&tp, |m| (3 * m + 1) % 8).unwrap();
    let ct = tfhe::lwe_encrypt(5, &lwe, &tp, 43).unwrap();
    let want = tfhe::blind_rotate(&lut, &ct, &keys, &tp, Genome::reference()).unwrap();
    let mut tfhe_passing = 0;
    for g in &space {
        if !ev.evaluate(*g).passed() {
            continue;
        }
        tfhe_passing += 1;
        let got = tfhe::blind_rotate(&lut, &ct, &keys, &tp, *g).unwrap();
        ensure(got == want, || {
            format!("blind_rotate output differs for {g}")
        })?;
    }

    // he_mul over every CKKS genome that passes the gates.
    let cp = CkksParams::toy();
    let ev = insecure_ok(Target::HeMul, ParamSet::Ckks(cp.clone()));
    let ck = ckks::keygen(&cp, 44, &[]);
    let mut rng = seeded(45);
    let enc = |seed: u64, rng: &mut fhevolve::rng::SeededRng| {
        let v = random_slots(rng, cp.slot_count());
        let pt = ckks::encode(&v, cp.scale(), &cp, cp.levels()).unwrap();
        ckks::encrypt(&pt, cp.scale(), &ck.secret, &cp, seed)
    };
    let (x, y) = (enc(46, &mut rng), enc(47, &mut rng));
    let want = ckks::he_mul(&x, &y, &ck.relin, &cp, Genome::reference()).unwrap();
    let mut ckks_passing = 0;
    let mut overflow_rejected = 0;
    for g in &space {
        let r = ev.evaluate(*g);
        let narrow_elided = g.elide_cast && g.lane_width_bits < 32;
        if narrow_elided {
            let f = r.first_failure();
            ensure(
                f.is_some_and(|f| f.gate == Gate::Unit && f.witness.is_some()),
                || format!("CKKS overflow genome {g} not rejected at the unit tier: {f:?}"),
            )?;
            overflow_rejected += 1;
            continue;
        }
        ensure(r.passed(), || {
            format!(
                "CKKS genome {g} unexpectedly failed: {:?}",
                r.first_failure()
            )
        })?;
        ckks_passing += 1;
        let got = ckks::he_mul(&x, &y, &ck.relin, &cp, *g).unwrap();
        ensure(got == want, || format!("he_mul output differs for {g}"))?;
    }

    // With 16-bit gadget digits, 8-bit elided lanes overflow in TFHE too.
    let wide = TfheParams {
        decomp_base_log: 16,
        decomp_levels: 2,
        ..TfheParams::toy()
    };
    let ev = insecure_ok(Target::BlindRotate, ParamSet::Tfhe(wide.clone()));
    let desc = ev.descriptor(Genome::reference());
    let reference = ev.correctness_gate(
        &fhevolve::variants::VariantKernel::new(desc).unwrap(),
        &desc,
        Gate::Unit,
        0,
    );
    ensure(reference.passed, || {
        "reference genome fails the unit tier on 16-bit digits".into()
    })?;
    for g in space
        .iter()
        .filter(|g| g.elide_cast && g.lane_width_bits == 8)
    {
        let r = ev.evaluate(*g);
        let f = r.first_failure();
        ensure(
            f.is_some_and(|f| f.gate == Gate::Unit && f.witness.is_some()),
            || format!("TFHE overflow genome {g} not rejected at the unit tier: {f:?}"),
        )?;
        overflow_rejected += 1;
    }
    Ok(format!(
        "blind_rotate identical over {tfhe_passing} genomes, he_mul identical over {ckks_passing}, {overflow_rejected} overflow genomes rejected at unit tier, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn cost_model_direction() -> Verdict {
    let cfg = CostModelConfig::default();
    let p = TfheParams::toy();
    let lat = |g: Genome| {
        cost_model_latency(
            &tfhe::kernel_descriptor(&p, OpKind::BlindRotateLoop, g),
            &cfg,
        )
    };
    let reference = Genome::reference();
    let steps = [
        reference,
        Genome {
            unroll_factor: 8,
            ..reference
        },
        Genome {
            unroll_factor: 8,
            tile_split: 2,
            ..reference
        },
        Genome {
            unroll_factor: 8,
            tile_split: 2,
            elide_cast: true,
            ..reference
        },
    ];
    let lats: Vec<f64> = steps.iter().map(|g| lat(*g)).collect();
    for w in lats.windows(2) {
        ensure(w[1] < w[0], || {
            format!("latency does not decrease along the steps: {lats:?}")
        })?;
    }
    let best = default_space()
        .into_iter()
        .map(lat)
        .fold(f64::INFINITY, f64::min);
    let speedup = lats[0] / best;
    ensure(speedup >= 2.0, || {
        format!("best modeled speedup {speedup:.2}x < 2x")
    })?;
    Ok(format!(
        "cycles {:.0} > {:.0} > {:.0} > {:.0}; step sequence {:.2}x, space optimum {:.2}x",
        lats[0],
        lats[1],
        lats[2],
        lats[3],
        lats[0] / lats[3],
        speedup
    ))
}

fn search_config(seed: u64) -> SearchConfig {
    SearchConfig {
        islands: 4,
        population_per_island: 8,
        generations: 30,
        rng_seed: seed,
        allow_insecure: true,
        ..Default::default()
    }
}

fn search_convergence() -> Verdict {
    let start = Instant::now();
    let ev = insecure_ok(Target::BlindRotate, ParamSet::Tfhe(TfheParams::toy()));
    let (_, optimum) = exhaustive_best(&ev, &default_space()).unwrap();
    let mut hits = 0;
    for seed in 0..20 {
        let r = run_search_with(&search_config(seed), &ev).map_err(|e| e.to_string())?;
        for w in r.ledger.windows(2) {
            ensure(w[1].best_score_so_far >= w[0].best_score_so_far, || {
                format!("seed {seed}: best-so-far decreased")
            })?;
        }
        hits += (r.best.score() == optimum) as usize;
    }
    ensure(hits >= 19, || format!("optimum found in {hits}/20 seeds"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "optimum {:.3} us found in {hits}/20 seeds, {:.1}s including exhaustive enumeration",
        -optimum,
        start.elapsed().as_secs_f64()
    ))
}

fn gate_integrity() -> Verdict {
    let space = default_space();
    let evaluators: Vec<Evaluator> = Target::ALL
        .into_iter()
        .map(|t| {
            let params = match t.scheme() {
                "tfhe" => ParamSet::Tfhe(TfheParams::toy()),
                _ => ParamSet::Ckks(CkksParams::toy()),
            };
            insecure_ok(t, params)
        })
        .collect();
    let mut canary = 0;
    let mut insecure = 0;
    for trial in 0..100u64 {
        let ev = &evaluators[trial as usize % evaluators.len()];
        let genome = space[(derive_seed(trial, 0) % space.len() as u64) as usize];
        let desc = ev.descriptor(genome);
        let r = ev.evaluate_kernel(&ZeroingKernel, &desc, trial);
        ensure(r.score.is_none() && r.latency_us.is_none(), || {
            format!("trial {trial}: canary was scored")
        })?;
        canary += 1;

        // Alternate the two ways parameters are refused: toy parameters
        // without the override, and a standard-flagged set off the table.
        let params = if trial % 2 == 0 {
            ParamSet::Tfhe(TfheParams::toy())
        } else {
            ParamSet::Ckks(CkksParams {
                security_flag: SecurityFlag::StandardValidated,
                ..CkksParams::toy()
            })
        };
        let target = if trial % 2 == 0 {
            Target::BlindRotate
        } else {
            Target::HeMul
        };
        let mut cfg = EvaluatorConfig::new(target, params);
        cfg.allow_insecure = trial % 2 == 1;
        cfg.gate_seed = trial;
        let bad = Evaluator::new(cfg).unwrap();
        let r = bad.evaluate(genome);
        ensure(
            r.score.is_none()
                && r.gates.len() == 1
                && r.gates[0].gate == Gate::Security
                && bad.workload().is_err(),
            || format!("trial {trial}: insecure parameters not refused up front"),
        )?;
        insecure += 1;
    }
    Ok(format!(
        "canary rejected {canary}/100, insecure parameters rejected {insecure}/100"
    ))
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let params = ParamSet::Tfhe(TfheParams::toy());
    let cfg = search_config(8);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let ev = insecure_ok(Target::BlindRotate, params.clone());
        let r = run_search_with(&cfg, &ev).map_err(|e| e.to_string())?;
        let dir = RunDirectory::new(tmp.path().join(name));
        dir.write(&cfg, &params, &r).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(dir.path.join(f)).map_err(|e| e.to_string());
        files.push((read("ledger.jsonl")?, read("best.json")?));
    }
    ensure(files[0].0 == files[1].0, || "ledgers differ".into())?;
    ensure(files[0].1 == files[1].1, || "best.json differs".into())?;
    Ok(format!(
        "ledger ({} bytes) and best.json ({} bytes) byte-identical",
        files[0].0.len(),
        files[0].1.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("toeplitz oracle equivalence", toeplitz_equivalence),
        ("exhaustive TFHE LUT suite", tfhe_lut_suite),
        ("CKKS end-to-end fidelity", ckks_fidelity),
        ("genome semantic invariance", genome_invariance),
        ("cost-model step ordering", cost_model_direction),
        ("search convergence", search_convergence),
        ("gate integrity", gate_integrity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
