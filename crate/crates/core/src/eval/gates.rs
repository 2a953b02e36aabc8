//! Correctness tiers: kernel-level oracle comparison, module-level
//! equivalence and full encrypt/evaluate/decrypt runs.

use num_complex::Complex64;
use rand::Rng;

use super::{Gate, GateResult, Target};
use crate::ckks::{self, CkksCiphertext, KeySet};
use crate::modring::{RingParams, RingPoly};
use crate::params::{CkksParams, ParamSet, TfheParams};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::tfhe::{self, BootstrapKeys, Lut, LweCiphertext, LweSecret, RgswCiphertext, RlweSecret};
use crate::variants::{KernelDescriptor, PolyKernel, ReferenceKernel};

pub const UNIT_RANDOM_TRIALS: usize = 32;
pub const CKKS_TOLERANCE: f64 = 1e-3;

/// Keys, ciphertexts and tables shared by every candidate of one search.
pub enum Workload {
    Tfhe(Box<TfheWorkload>),
    Ckks(Box<CkksWorkload>),
}

pub struct TfheWorkload {
    pub params: TfheParams,
    pub lwe: LweSecret,
    pub rlwe: RlweSecret,
    pub keys: BootstrapKeys,
    pub lut: Lut,
    pub chain_lut: Lut,
    pub inputs: Vec<LweCiphertext>,
    pub selector: RgswCiphertext,
}

pub struct CkksWorkload {
    pub params: CkksParams,
    pub keys: KeySet,
    pub slots: [Vec<Complex64>; 3],
    pub cts: [CkksCiphertext; 3],
}

/// Rotation amounts the CKKS workload carries keys for.
pub const CKKS_ROTATIONS: [usize; 3] = [1, 2, 3];

/// A fixed non-constant permutation, and a second table for chaining.
const TFHE_TABLE: [u64; 8] = [3, 6, 1, 4, 7, 2, 5, 0];
const TFHE_CHAIN_TABLE: [u64; 8] = [5, 0, 7, 2, 1, 6, 3, 4];

fn random_slots(rng: &mut SeededRng, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

impl Workload {
    pub fn build(params: &ParamSet, seed: u64) -> Result<Self, String> {
        match params {
            ParamSet::Tfhe(p) => {
                let (lwe, rlwe, keys) = tfhe::keygen(p, derive_seed(seed, 10));
                let count = p.message_count();
                let table: Vec<u64> = (0..count)
                    .map(|m| TFHE_TABLE[(m % 8) as usize] % count)
                    .collect();
                let chain: Vec<u64> = (0..count)
                    .map(|m| TFHE_CHAIN_TABLE[(m % 8) as usize] % count)
                    .collect();
                let lut = Lut::new(&table, p).map_err(|e| e.to_string())?;
                let chain_lut = Lut::new(&chain, p).map_err(|e| e.to_string())?;
                let inputs = (0..count)
                    .map(|m| tfhe::lwe_encrypt(m, &lwe, p, derive_seed(seed, 100 + m)))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let mut rng = seeded(derive_seed(seed, 11));
                let selector =
                    tfhe::rgsw_encrypt(1, &rlwe, p, &mut rng).map_err(|e| e.to_string())?;
                Ok(Workload::Tfhe(Box::new(TfheWorkload {
                    params: p.clone(),
                    lwe,
                    rlwe,
                    keys,
                    lut,
                    chain_lut,
                    inputs,
                    selector,
                })))
            }
            ParamSet::Ckks(p) => {
                let keys = ckks::keygen(p, derive_seed(seed, 20), &CKKS_ROTATIONS);
                let mut rng = seeded(derive_seed(seed, 21));
                let slots = [
                    random_slots(&mut rng, p.slot_count()),
                    random_slots(&mut rng, p.slot_count()),
                    random_slots(&mut rng, p.slot_count()),
                ];
                let top = p.levels();
                let mut cts = Vec::with_capacity(3);
                // The third input meets the product of the first two, so it
                // sits one level down at the rescaled scale.
                let q_last = p.modulus_chain[top - 1] as f64;
                let placement = [
                    (top, p.scale()),
                    (top, p.scale()),
                    (top - 1, p.scale() * p.scale() / q_last),
                ];
                for (i, (v, (level, scale))) in slots.iter().zip(placement).enumerate() {
                    let pt = ckks::encode(v, scale, p, level).map_err(|e| e.to_string())?;
                    cts.push(ckks::encrypt(
                        &pt,
                        scale,
                        &keys.secret,
                        p,
                        derive_seed(seed, 30 + i as u64),
                    ));
                }
                let cts: [CkksCiphertext; 3] = cts.try_into().expect("three ciphertexts");
                Ok(Workload::Ckks(Box::new(CkksWorkload {
                    params: p.clone(),
                    keys,
                    slots,
                    cts,
                })))
            }
        }
    }
}

/// Rings the kernel is exercised on at the unit tier.
fn unit_rings(workload: &Workload) -> Vec<(RingParams, usize)> {
    match workload {
        Workload::Tfhe(w) => vec![(w.params.ring, 2 * w.params.decomp_levels as usize)],
        Workload::Ckks(w) => {
            let p = &w.params;
            vec![
                (p.ring(p.modulus_chain[0]), p.levels()),
                (p.ring(p.special_primes[0]), p.levels()),
            ]
        }
    }
}

fn first_difference(got: &RingPoly, want: &RingPoly) -> String {
    let k = got
        .coeffs()
        .iter()
        .zip(want.coeffs())
        .position(|(a, b)| a != b)
        .unwrap_or(0);
    format!(
        "coefficient {k}: got {} expected {}",
        got.coeffs()[k],
        want.coeffs()[k]
    )
}

/// Variant kernel against the schoolbook oracle on random operands within
/// the declared range, then on range-boundary operands.
pub fn unit_gate(
    kernel: &dyn PolyKernel,
    desc: &KernelDescriptor,
    workload: &Workload,
    seed: u64,
) -> GateResult {
    let mut rng = seeded(derive_seed(seed, 1));
    for (ring, pairs) in unit_rings(workload) {
        let q = ring.q();
        let max = desc.operand_max().min(q - 1);
        let mut cases: Vec<(String, Vec<RingPoly>, Vec<RingPoly>)> = Vec::new();
        for trial in 0..UNIT_RANDOM_TRIALS {
            let narrow = (0..pairs)
                .map(|_| poly(ring, |_| rng.random_range(0..=max)))
                .collect();
            let wide = (0..pairs)
                .map(|_| poly(ring, |_| rng.random_range(0..q)))
                .collect();
            cases.push((format!("random trial {trial}"), narrow, wide));
        }
        let wide: Vec<RingPoly> = (0..pairs)
            .map(|_| poly(ring, |_| rng.random_range(0..q)))
            .collect();
        let ones: Vec<RingPoly> = (0..pairs).map(|_| poly(ring, |_| 1)).collect();
        cases.push((
            format!("all narrow coefficients = {max}"),
            (0..pairs).map(|_| poly(ring, |_| max)).collect(),
            wide.clone(),
        ));
        cases.push((
            format!("single narrow coefficient = {max}, unit wide operand"),
            (0..pairs)
                .map(|_| poly(ring, |k| if k == 0 { max } else { 0 }))
                .collect(),
            ones,
        ));
        cases.push((
            format!("alternating {max}/0 narrow coefficients"),
            (0..pairs)
                .map(|_| poly(ring, |k| if k % 2 == 0 { max } else { 0 }))
                .collect(),
            wide,
        ));
        for (label, narrow, wide) in cases {
            let refs: Vec<(&RingPoly, &RingPoly)> = narrow.iter().zip(&wide).collect();
            let want = ReferenceKernel
                .multiply_accumulate(&refs)
                .expect("oracle accepts well-formed input");
            match kernel.multiply_accumulate(&refs) {
                Ok(got) if got == want => {}
                Ok(got) => {
                    return GateResult::fail(
                        Gate::Unit,
                        format!("{label} in ring {ring}: {}", first_difference(&got, &want)),
                    )
                }
                Err(e) => {
                    return GateResult::fail(Gate::Unit, format!("{label} in ring {ring}: {e}"))
                }
            }
        }
    }
    GateResult::pass(Gate::Unit)
}

fn poly(ring: RingParams, f: impl FnMut(usize) -> u64) -> RingPoly {
    RingPoly::new(ring, (0..ring.n()).map(f).collect()).expect("values reduced")
}

/// The enclosing operation with the candidate kernel against the same
/// operation with the oracle kernel, bit for bit.
pub fn module_gate(
    kernel: &dyn PolyKernel,
    desc: &KernelDescriptor,
    target: Target,
    workload: &Workload,
    seed: u64,
) -> GateResult {
    let mut rng = seeded(derive_seed(seed, 2));
    match workload {
        Workload::Tfhe(w) => {
            let p = &w.params;
            let msg = poly(p.ring, |_| rng.random_range(0..p.q()));
            let c = match tfhe::rlwe_encrypt(&msg, &w.rlwe, p.rlwe_noise_std, &mut rng) {
                Ok(c) => c,
                Err(e) => return GateResult::fail(Gate::Module, e.to_string()),
            };
            let want = tfhe::external_product_with(&w.selector, &c, p, &ReferenceKernel);
            let got = tfhe::external_product_with(&w.selector, &c, p, kernel);
            if let Some(r) = compare(Gate::Module, "external product", got, want) {
                return r;
            }
            if target == Target::BlindRotate {
                let idx = rng.random_range(0..w.inputs.len());
                let ct = &w.inputs[idx];
                let want = tfhe::blind_rotate_with(&w.lut, ct, &w.keys, p, &ReferenceKernel, 1);
                let got = tfhe::blind_rotate_with(
                    &w.lut,
                    ct,
                    &w.keys,
                    p,
                    kernel,
                    desc.genome.unroll_factor as usize,
                );
                if let Some(r) = compare(Gate::Module, "blind rotation", got, want) {
                    return r;
                }
            }
            GateResult::pass(Gate::Module)
        }
        Workload::Ckks(w) => {
            let (d, key) = match target {
                Target::HeRot => {
                    let rot = CKKS_ROTATIONS[rng.random_range(0..CKKS_ROTATIONS.len())];
                    let k = ckks::galois_element(rot, w.params.ring_degree);
                    let rotated = match ckks::automorphism_ct(&w.cts[0], rot) {
                        Ok(r) => r,
                        Err(e) => return GateResult::fail(Gate::Module, e.to_string()),
                    };
                    (rotated.c1, w.keys.rotation_key(k).expect("workload key"))
                }
                _ => {
                    let (_, _, d2) = ckks::tensor_multiply(&w.cts[0], &w.cts[1])
                        .expect("workload ciphertexts share a level");
                    (d2, &w.keys.relin)
                }
            };
            let want = ckks::key_switch(&d, key, &ReferenceKernel);
            let got = ckks::key_switch(&d, key, kernel);
            compare(Gate::Module, "key switch", got, want)
                .unwrap_or_else(|| GateResult::pass(Gate::Module))
        }
    }
}

fn compare<T: PartialEq, E: std::fmt::Display>(
    gate: Gate,
    what: &str,
    got: Result<T, E>,
    want: Result<T, E>,
) -> Option<GateResult> {
    let want = match want {
        Ok(w) => w,
        Err(e) => return Some(GateResult::fail(gate, format!("{what} oracle failed: {e}"))),
    };
    match got {
        Ok(g) if g == want => None,
        Ok(_) => Some(GateResult::fail(
            gate,
            format!("{what} output differs from the oracle kernel"),
        )),
        Err(e) => Some(GateResult::fail(gate, format!("{what}: {e}"))),
    }
}

fn rel_error(got: &[Complex64], want: &[Complex64]) -> f64 {
    let mag = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let err = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if mag == 0.0 {
        err
    } else {
        err / mag
    }
}

/// Encrypt, evaluate with the candidate, decrypt, compare against the
/// plaintext computation; includes one depth-2 run.
pub fn end_to_end_gate(
    kernel: &dyn PolyKernel,
    desc: &KernelDescriptor,
    workload: &Workload,
    seed: u64,
) -> GateResult {
    let unroll = desc.genome.unroll_factor as usize;
    match workload {
        Workload::Tfhe(w) => {
            let p = &w.params;
            let mut outputs = Vec::with_capacity(w.inputs.len());
            for (m, ct) in w.inputs.iter().enumerate() {
                let out = match tfhe::bootstrap_with(ct, &w.lut, &w.keys, p, kernel, unroll) {
                    Ok(o) => o,
                    Err(e) => return GateResult::fail(Gate::EndToEnd, e.to_string()),
                };
                let got = tfhe::lwe_decrypt(&out, &w.lwe, p).expect("dimension checked");
                if got != w.lut.table[m] {
                    return GateResult::fail(
                        Gate::EndToEnd,
                        format!(
                            "bootstrap of input {m} decrypted to {got}, expected {}",
                            w.lut.table[m]
                        ),
                    );
                }
                outputs.push(out);
            }
            let m = (derive_seed(seed, 3) % outputs.len() as u64) as usize;
            let twice =
                match tfhe::bootstrap_with(&outputs[m], &w.chain_lut, &w.keys, p, kernel, unroll) {
                    Ok(o) => o,
                    Err(e) => return GateResult::fail(Gate::EndToEnd, e.to_string()),
                };
            let got = tfhe::lwe_decrypt(&twice, &w.lwe, p).expect("dimension checked");
            let want = w.chain_lut.table[w.lut.table[m] as usize];
            if got != want {
                return GateResult::fail(
                    Gate::EndToEnd,
                    format!("depth-2 chain on input {m} decrypted to {got}, expected {want}"),
                );
            }
            GateResult::pass(Gate::EndToEnd)
        }
        Workload::Ckks(w) => match ckks_end_to_end(kernel, w, seed) {
            Ok(()) => GateResult::pass(Gate::EndToEnd),
            Err(witness) => GateResult::fail(Gate::EndToEnd, witness),
        },
    }
}

fn ckks_end_to_end(kernel: &dyn PolyKernel, w: &CkksWorkload, seed: u64) -> Result<(), String> {
    let sk = &w.keys.secret;
    let decode = |ct: &CkksCiphertext| ckks::decode(&ckks::decrypt(ct, sk), ct.scale);
    let check = |what: &str, got: Vec<Complex64>, want: Vec<Complex64>| {
        let err = rel_error(&got, &want);
        if err < CKKS_TOLERANCE {
            Ok(())
        } else {
            Err(format!(
                "{what}: relative error {err:.3e} >= {CKKS_TOLERANCE:e}"
            ))
        }
    };
    let [a, b, c] = &w.slots;
    let [ca, cb, cc] = &w.cts;
    let prod = ckks::he_mul_with(ca, cb, &w.keys.relin, kernel).map_err(|e| e.to_string())?;
    let ab: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    check("he_mul", decode(&prod), ab.clone())?;

    let rot = CKKS_ROTATIONS[(derive_seed(seed, 4) % CKKS_ROTATIONS.len() as u64) as usize];
    let rotated = ckks::he_rot_with(ca, rot, &w.keys, kernel).map_err(|e| e.to_string())?;
    let mut want = a.clone();
    want.rotate_left(rot);
    check("he_rot", decode(&rotated), want)?;

    // Depth 2: multiply the product by a third input prepared at its level.
    let abc = ckks::he_mul_with(&prod, cc, &w.keys.relin, kernel).map_err(|e| e.to_string())?;
    let want: Vec<Complex64> = ab.iter().zip(c).map(|(x, y)| x * y).collect();
    check("depth-2 he_mul", decode(&abc), want)?;
    let chained = ckks::he_rot_with(&prod, 1, &w.keys, kernel).map_err(|e| e.to_string())?;
    let mut want = ab;
    want.rotate_left(1);
    check("he_mul then he_rot", decode(&chained), want)
}
