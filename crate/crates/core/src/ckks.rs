//! Toy RNS-CKKS with a single special prime for key switching.
//!
//! Ciphertexts are pairs `(c0, c1)` with phase `c0 + c1 * s`. Slot `j`
//! of a plaintext is its evaluation at `zeta^(5^j)`, `zeta = exp(i pi / N)`,
//! so the automorphism `X -> X^(5^r)` rotates slots left by `r`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::modring::{
    automorphism_ref, inv_mod, mul_mod, pow_mod, sub_mod, RingError, RingParams, RingPoly,
};
use crate::params::CkksParams;
use crate::rng::{derive_seed, gaussian, seeded, SeededRng};
use crate::variants::{
    Genome, KernelDescriptor, OpKind, PolyKernel, Shape, VariantError, VariantKernel,
};

pub const GALOIS_GENERATOR: u64 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CkksError {
    #[error("{count} slots exceed capacity {capacity}")]
    Capacity { count: usize, capacity: usize },
    #[error("level mismatch: {left} vs {right}")]
    Level { left: usize, right: usize },
    #[error("cannot rescale at level {0}")]
    CannotRescale(usize),
    #[error("rotation {rot} out of range for {slots} slots")]
    Rotation { rot: usize, slots: usize },
    #[error("no evaluation key for galois element {0}")]
    MissingKey(usize),
    #[error("evaluation key has {found} digits, expected at least {expected}")]
    Digits { expected: usize, found: usize },
    #[error("input lacks special-prime limbs")]
    MissingSpecial,
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Variant(#[from] VariantError),
}

/// One residue polynomial per active modulus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RnsPoly {
    pub limbs: Vec<RingPoly>,
}

impl RnsPoly {
    pub fn zero(n: usize, moduli: &[u64]) -> Self {
        Self {
            limbs: moduli
                .iter()
                .map(|&q| RingPoly::zero(RingParams::new(n, q).expect("valid modulus")))
                .collect(),
        }
    }

    pub fn from_signed(values: &[i64], moduli: &[u64]) -> Self {
        let n = values.len();
        Self {
            limbs: moduli
                .iter()
                .map(|&q| {
                    let params = RingParams::new(n, q).expect("valid modulus");
                    RingPoly::from_signed(params, values).expect("length matches")
                })
                .collect(),
        }
    }

    pub fn level(&self) -> usize {
        self.limbs.len()
    }

    pub fn degree(&self) -> usize {
        self.limbs[0].params().n()
    }

    pub fn moduli(&self) -> Vec<u64> {
        self.limbs.iter().map(|l| l.params().q()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(RingPoly::is_zero)
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(&RingPoly, &RingPoly) -> Result<RingPoly, RingError>,
    ) -> Result<Self, CkksError> {
        if self.level() != other.level() {
            return Err(CkksError::Level {
                left: self.level(),
                right: other.level(),
            });
        }
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| f(a, b))
            .collect::<Result<_, _>>()?;
        Ok(Self { limbs })
    }

    pub fn add(&self, other: &Self) -> Result<Self, CkksError> {
        self.zip_with(other, RingPoly::add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, CkksError> {
        self.zip_with(other, RingPoly::sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, CkksError> {
        self.zip_with(other, RingPoly::mul)
    }

    pub fn neg(&self) -> Self {
        Self {
            limbs: self.limbs.iter().map(RingPoly::neg).collect(),
        }
    }

    pub fn automorphism(&self, k: usize) -> Result<Self, CkksError> {
        let limbs = self
            .limbs
            .iter()
            .map(|l| automorphism_ref(l, k))
            .collect::<Result<_, _>>()?;
        Ok(Self { limbs })
    }

    /// Keep the first `level` limbs.
    pub fn truncate(&self, level: usize) -> Self {
        Self {
            limbs: self.limbs[..level].to_vec(),
        }
    }

    /// Centered big-integer coefficients via CRT.
    pub fn to_signed_coeffs(&self) -> Vec<i128> {
        let moduli = self.moduli();
        (0..self.degree())
            .map(|i| {
                let residues: Vec<u64> = self.limbs.iter().map(|l| l.coeffs()[i]).collect();
                crt_centered(&residues, &moduli)
            })
            .collect()
    }
}

/// Garner reconstruction into `[0, prod)`; the product must fit in 127 bits.
pub fn crt_lift(residues: &[u64], moduli: &[u64]) -> u128 {
    let k = moduli.len();
    let mut digits = vec![0u64; k];
    for i in 0..k {
        let qi = moduli[i];
        // Evaluate the partial mixed-radix value mod q_i.
        let mut acc = 0u64;
        let mut radix = 1u64;
        for j in 0..i {
            acc = (acc + mul_mod(digits[j] % qi, radix, qi)) % qi;
            radix = mul_mod(radix, moduli[j] % qi, qi);
        }
        let diff = sub_mod(residues[i] % qi, acc, qi);
        digits[i] = mul_mod(diff, inv_mod(radix, qi).expect("coprime moduli"), qi);
    }
    let mut x: u128 = 0;
    for i in (0..k).rev() {
        x = x * moduli[i] as u128 + digits[i] as u128;
    }
    x
}

pub fn crt_centered(residues: &[u64], moduli: &[u64]) -> i128 {
    let prod: u128 = moduli.iter().map(|&q| q as u128).product();
    let x = crt_lift(residues, moduli);
    if x > prod / 2 {
        x as i128 - prod as i128
    } else {
        x as i128
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkksCiphertext {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
    pub scale: f64,
}

impl CkksCiphertext {
    pub fn level(&self) -> usize {
        self.c0.level()
    }

    pub fn add(&self, other: &Self) -> Result<Self, CkksError> {
        Ok(Self {
            c0: self.c0.add(&other.c0)?,
            c1: self.c1.add(&other.c1)?,
            scale: self.scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub coeffs: Vec<i64>,
}

impl SecretKey {
    pub fn rns(&self, moduli: &[u64]) -> RnsPoly {
        RnsPoly::from_signed(&self.coeffs, moduli)
    }

    /// `s(X^k)`.
    pub fn automorphism(&self, k: usize) -> SecretKey {
        let n = self.coeffs.len();
        let mut out = vec![0i64; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let idx = i * k % (2 * n);
            if idx < n {
                out[idx] = c;
            } else {
                out[idx - n] = -c;
            }
        }
        SecretKey { coeffs: out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyTarget {
    Relinearization,
    Galois(usize),
}

/// Per-digit key-switch pairs over the full chain plus the special prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalKey {
    pub target: KeyTarget,
    /// `digits[i] = (b_i, a_i)` with `b_i + a_i s = P * e_i * s' + noise`,
    /// where `e_i` is the CRT idempotent of `q_i`.
    pub digits: Vec<(RnsPoly, RnsPoly)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySet {
    pub secret: SecretKey,
    pub relin: EvalKey,
    pub rotations: BTreeMap<usize, EvalKey>,
}

impl KeySet {
    pub fn rotation_key(&self, galois: usize) -> Result<&EvalKey, CkksError> {
        self.rotations
            .get(&galois)
            .ok_or(CkksError::MissingKey(galois))
    }
}

pub fn galois_element(rot: usize, n: usize) -> usize {
    pow_mod(GALOIS_GENERATOR, rot as u64, 2 * n as u64) as usize
}

fn extended_moduli(params: &CkksParams) -> Vec<u64> {
    params
        .modulus_chain
        .iter()
        .chain(&params.special_primes)
        .copied()
        .collect()
}

fn uniform_rns(rng: &mut SeededRng, n: usize, moduli: &[u64]) -> RnsPoly {
    RnsPoly {
        limbs: moduli
            .iter()
            .map(|&q| {
                let c = (0..n).map(|_| rng.random_range(0..q)).collect();
                RingPoly::new(RingParams::new(n, q).expect("valid"), c).expect("in range")
            })
            .collect(),
    }
}

fn noise_rns(rng: &mut SeededRng, n: usize, std: f64, moduli: &[u64]) -> RnsPoly {
    let e: Vec<i64> = (0..n).map(|_| gaussian(rng, std)).collect();
    RnsPoly::from_signed(&e, moduli)
}

fn ternary(rng: &mut SeededRng, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

fn make_eval_key(
    target: KeyTarget,
    s: &SecretKey,
    s_prime: &SecretKey,
    params: &CkksParams,
    rng: &mut SeededRng,
) -> EvalKey {
    let n = params.ring_degree;
    let moduli = extended_moduli(params);
    let special = params.special_primes[0];
    let s_rns = s.rns(&moduli);
    let sp_rns = s_prime.rns(&moduli);
    let digits = (0..params.levels())
        .map(|i| {
            let a = uniform_rns(rng, n, &moduli);
            let e = noise_rns(rng, n, params.noise_std, &moduli);
            let mut b = a
                .mul(&s_rns)
                .expect("same basis")
                .neg()
                .add(&e)
                .expect("same basis");
            // P * e_i is P mod q_i on limb i and zero on every other limb.
            let qi = moduli[i];
            let gadget = sp_rns.limbs[i].scalar_mul(special % qi);
            b.limbs[i] = b.limbs[i].add(&gadget).expect("same ring");
            (b, a)
        })
        .collect();
    EvalKey { target, digits }
}

/// Secret key, relinearization key and Galois keys for the given rotations.
pub fn keygen(params: &CkksParams, seed: u64, rotations: &[usize]) -> KeySet {
    let n = params.ring_degree;
    let mut rng = seeded(derive_seed(seed, 0));
    let secret = SecretKey {
        coeffs: ternary(&mut rng, n),
    };
    let s2 = {
        let moduli = extended_moduli(params);
        let s = secret.rns(&moduli);
        let sq = s.mul(&s).expect("same basis");
        SecretKey {
            coeffs: sq
                .to_signed_coeffs()
                .into_iter()
                .map(|c| c as i64)
                .collect(),
        }
    };
    let mut relin_rng = seeded(derive_seed(seed, 1));
    let relin = make_eval_key(
        KeyTarget::Relinearization,
        &secret,
        &s2,
        params,
        &mut relin_rng,
    );
    let mut rot_map = BTreeMap::new();
    for &rot in rotations {
        let k = galois_element(rot, n);
        if rot_map.contains_key(&k) {
            continue;
        }
        let mut r = seeded(derive_seed(seed, 2 + k as u64));
        let key = make_eval_key(
            KeyTarget::Galois(k),
            &secret,
            &secret.automorphism(k),
            params,
            &mut r,
        );
        rot_map.insert(k, key);
    }
    KeySet {
        secret,
        relin,
        rotations: rot_map,
    }
}

fn roots(n: usize) -> Vec<Complex64> {
    let two_n = 2 * n as u64;
    (0..n / 2)
        .map(|j| {
            let e = pow_mod(GALOIS_GENERATOR, j as u64, two_n) as f64;
            Complex64::from_polar(1.0, std::f64::consts::PI * e / n as f64)
        })
        .collect()
}

/// Inverse canonical embedding, scaled and rounded, carried into the
/// first `level` chain moduli.
pub fn encode(
    slots: &[Complex64],
    scale: f64,
    params: &CkksParams,
    level: usize,
) -> Result<RnsPoly, CkksError> {
    let n = params.ring_degree;
    let capacity = n / 2;
    if slots.len() > capacity {
        return Err(CkksError::Capacity {
            count: slots.len(),
            capacity,
        });
    }
    let roots = roots(n);
    let coeffs: Vec<i64> = (0..n)
        .map(|k| {
            let sum: Complex64 = slots
                .iter()
                .zip(&roots)
                .map(|(z, r)| z * r.powi(-(k as i32)))
                .sum();
            (2.0 * scale * sum.re / n as f64).round() as i64
        })
        .collect();
    Ok(RnsPoly::from_signed(
        &coeffs,
        &params.modulus_chain[..level],
    ))
}

pub fn decode(p: &RnsPoly, scale: f64) -> Vec<Complex64> {
    let coeffs: Vec<f64> = p.to_signed_coeffs().iter().map(|&c| c as f64).collect();
    let n = coeffs.len();
    roots(n)
        .iter()
        .map(|r| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut pow = Complex64::new(1.0, 0.0);
            for &c in &coeffs {
                acc += pow * c;
                pow *= r;
            }
            acc / scale
        })
        .collect()
}

/// Secret-key encryption at the plaintext's level.
pub fn encrypt(
    pt: &RnsPoly,
    scale: f64,
    sk: &SecretKey,
    params: &CkksParams,
    seed: u64,
) -> CkksCiphertext {
    let mut rng = seeded(seed);
    let moduli = pt.moduli();
    let n = pt.degree();
    let a = uniform_rns(&mut rng, n, &moduli);
    let e = noise_rns(&mut rng, n, params.noise_std, &moduli);
    let s = sk.rns(&moduli);
    let c0 = pt
        .add(&e)
        .expect("same basis")
        .sub(&a.mul(&s).expect("same basis"))
        .expect("same basis");
    CkksCiphertext { c0, c1: a, scale }
}

pub fn decrypt(ct: &CkksCiphertext, sk: &SecretKey) -> RnsPoly {
    let s = sk.rns(&ct.c1.moduli());
    ct.c0
        .add(&ct.c1.mul(&s).expect("same basis"))
        .expect("same basis")
}

pub fn tensor_multiply(
    x: &CkksCiphertext,
    y: &CkksCiphertext,
) -> Result<(RnsPoly, RnsPoly, RnsPoly), CkksError> {
    if x.level() != y.level() {
        return Err(CkksError::Level {
            left: x.level(),
            right: y.level(),
        });
    }
    let d0 = x.c0.mul(&y.c0)?;
    let d1 = x.c0.mul(&y.c1)?.add(&x.c1.mul(&y.c0)?)?;
    let d2 = x.c1.mul(&y.c1)?;
    Ok((d0, d1, d2))
}

/// Descriptor of the key-switch inner product for a CKKS operation.
pub fn kernel_descriptor(params: &CkksParams, genome: Genome) -> KernelDescriptor {
    let n = params.ring_degree;
    let operand_bits = params
        .modulus_chain
        .iter()
        .map(|&q| 64 - (q - 1).leading_zeros())
        .max()
        .unwrap_or(1);
    KernelDescriptor {
        genome,
        op_kind: OpKind::CkksKeyswitchInner,
        shape: Shape {
            rows: params.levels() * n,
            cols: n,
        },
        trip_count: params.levels() + params.special_primes.len(),
        operand_bits,
    }
}

pub fn variant_kernel(params: &CkksParams, genome: Genome) -> Result<VariantKernel, CkksError> {
    Ok(VariantKernel::new(kernel_descriptor(params, genome))?)
}

/// Inner product of the RNS digits of `d` with the evaluation key, over
/// the active chain moduli plus the special prime. The result `(u0, u1)`
/// satisfies `u0 + u1 s ≈ P d s'`.
pub fn key_switch(
    d: &RnsPoly,
    evk: &EvalKey,
    kernel: &dyn PolyKernel,
) -> Result<(RnsPoly, RnsPoly), CkksError> {
    let level = d.level();
    if evk.digits.len() < level {
        return Err(CkksError::Digits {
            expected: level,
            found: evk.digits.len(),
        });
    }
    let full = evk.digits[0].0.level();
    let mut limb_ids: Vec<usize> = (0..level).collect();
    limb_ids.push(full - 1);
    let mut u0 = Vec::with_capacity(limb_ids.len());
    let mut u1 = Vec::with_capacity(limb_ids.len());
    for &j in &limb_ids {
        let ring = evk.digits[0].0.limbs[j].params();
        let q = ring.q();
        let lifted: Vec<RingPoly> = d
            .limbs
            .iter()
            .map(|limb| {
                let c = limb.coeffs().iter().map(|&x| x % q).collect();
                RingPoly::new(ring, c).expect("reduced")
            })
            .collect();
        let b_pairs: Vec<(&RingPoly, &RingPoly)> = lifted
            .iter()
            .zip(&evk.digits)
            .map(|(x, (b, _))| (x, &b.limbs[j]))
            .collect();
        let a_pairs: Vec<(&RingPoly, &RingPoly)> = lifted
            .iter()
            .zip(&evk.digits)
            .map(|(x, (_, a))| (x, &a.limbs[j]))
            .collect();
        u0.push(kernel.multiply_accumulate(&b_pairs)?);
        u1.push(kernel.multiply_accumulate(&a_pairs)?);
    }
    Ok((RnsPoly { limbs: u0 }, RnsPoly { limbs: u1 }))
}

/// Divide by the special prime (last limb) with rounding, dropping it.
pub fn approx_mod_down(p: &RnsPoly) -> Result<RnsPoly, CkksError> {
    if p.level() < 2 {
        return Err(CkksError::MissingSpecial);
    }
    let special = p.limbs.last().expect("non-empty");
    let sp = special.params().q();
    let half = sp / 2;
    // Adding P/2 before the floor division turns it into rounding.
    let shifted: Vec<u64> = special.coeffs().iter().map(|&x| (x + half) % sp).collect();
    let limbs = p.limbs[..p.level() - 1]
        .iter()
        .map(|limb| {
            let q = limb.params().q();
            let inv = inv_mod(sp % q, q).expect("coprime");
            let c = limb
                .coeffs()
                .iter()
                .zip(&shifted)
                .map(|(&x, &r)| {
                    let x = (x + half % q) % q;
                    mul_mod(sub_mod(x, r % q, q), inv, q)
                })
                .collect();
            RingPoly::new(limb.params(), c).expect("reduced")
        })
        .collect();
    Ok(RnsPoly { limbs })
}

pub fn rescale(ct: &CkksCiphertext) -> Result<CkksCiphertext, CkksError> {
    let level = ct.level();
    if level < 2 {
        return Err(CkksError::CannotRescale(level));
    }
    let q_last = ct.c0.limbs[level - 1].params().q();
    Ok(CkksCiphertext {
        c0: approx_mod_down(&ct.c0)?,
        c1: approx_mod_down(&ct.c1)?,
        scale: ct.scale / q_last as f64,
    })
}

pub fn relinearize(
    d: (RnsPoly, RnsPoly, RnsPoly),
    scale: f64,
    rlk: &EvalKey,
    kernel: &dyn PolyKernel,
) -> Result<CkksCiphertext, CkksError> {
    let (d0, d1, d2) = d;
    let (u0, u1) = key_switch(&d2, rlk, kernel)?;
    Ok(CkksCiphertext {
        c0: d0.add(&approx_mod_down(&u0)?)?,
        c1: d1.add(&approx_mod_down(&u1)?)?,
        scale,
    })
}

pub fn he_mul(
    x: &CkksCiphertext,
    y: &CkksCiphertext,
    rlk: &EvalKey,
    params: &CkksParams,
    genome: Genome,
) -> Result<CkksCiphertext, CkksError> {
    he_mul_with(x, y, rlk, &variant_kernel(params, genome)?)
}

pub fn he_mul_with(
    x: &CkksCiphertext,
    y: &CkksCiphertext,
    rlk: &EvalKey,
    kernel: &dyn PolyKernel,
) -> Result<CkksCiphertext, CkksError> {
    if x.level() < 2 {
        return Err(CkksError::CannotRescale(x.level()));
    }
    let d = tensor_multiply(x, y)?;
    let ct = relinearize(d, x.scale * y.scale, rlk, kernel)?;
    rescale(&ct)
}

/// Apply the Galois map for `rot` to both components; the result
/// decrypts under `s(X^k)` until key-switched.
pub fn automorphism_ct(ct: &CkksCiphertext, rot: usize) -> Result<CkksCiphertext, CkksError> {
    let n = ct.c0.degree();
    if rot >= n / 2 {
        return Err(CkksError::Rotation { rot, slots: n / 2 });
    }
    let k = galois_element(rot, n);
    Ok(CkksCiphertext {
        c0: ct.c0.automorphism(k)?,
        c1: ct.c1.automorphism(k)?,
        scale: ct.scale,
    })
}

pub fn he_rot(
    ct: &CkksCiphertext,
    rot: usize,
    keys: &KeySet,
    params: &CkksParams,
    genome: Genome,
) -> Result<CkksCiphertext, CkksError> {
    he_rot_with(ct, rot, keys, &variant_kernel(params, genome)?)
}

pub fn he_rot_with(
    ct: &CkksCiphertext,
    rot: usize,
    keys: &KeySet,
    kernel: &dyn PolyKernel,
) -> Result<CkksCiphertext, CkksError> {
    let rotated = automorphism_ct(ct, rot)?;
    if rot == 0 {
        return Ok(rotated);
    }
    let k = galois_element(rot, ct.c0.degree());
    let evk = keys.rotation_key(k)?;
    let (u0, u1) = key_switch(&rotated.c1, evk, kernel)?;
    Ok(CkksCiphertext {
        c0: rotated.c0.add(&approx_mod_down(&u0)?)?,
        c1: approx_mod_down(&u1)?,
        scale: ct.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crt_round_trip() {
        let moduli = [1073741953u64, 1073742209, 1073742721, 1073744257];
        for x in [0i128, 1, -1, 123456789012345678, -98765432109876543210] {
            let residues: Vec<u64> = moduli
                .iter()
                .map(|&q| x.rem_euclid(q as i128) as u64)
                .collect();
            assert_eq!(crt_centered(&residues, &moduli), x);
        }
    }

    #[test]
    fn galois_elements() {
        assert_eq!(galois_element(0, 64), 1);
        assert_eq!(galois_element(1, 64), 5);
        assert_eq!(galois_element(2, 64), 25);
        assert_eq!(galois_element(3, 64), 125);
    }

    #[test]
    fn secret_automorphism_matches_ring_map() {
        let p = CkksParams::toy();
        let keys = keygen(&p, 1, &[]);
        let q = p.modulus_chain[0];
        let s = keys.secret.rns(&[q]);
        for k in [5, 25, 127] {
            let want = automorphism_ref(&s.limbs[0], k).unwrap();
            assert_eq!(keys.secret.automorphism(k).rns(&[q]).limbs[0], want);
        }
    }
}
