//! Toy TFHE: LWE/RLWE/RGSW encryption, gadget decomposition, external
//! product, blind rotation, sample extraction, key switching and the
//! programmable bootstrap over small lookup tables.
//!
//! Messages carry a padding bit: `m` is encoded as
//! `m * Q / 2^(p+1) + Q / 2^(p+2)` so that every phase of a valid encoding
//! lies in the positive half of the torus, which lets the negacyclic test
//! polynomial hold an arbitrary table.

use rand::Rng;
use thiserror::Error;

use crate::modring::{add_mod, from_signed, mul_mod, sub_mod, RingError, RingParams, RingPoly};
use crate::params::TfheParams;
use crate::rng::{derive_seed, gaussian, seeded, SeededRng};
use crate::variants::{
    Genome, KernelDescriptor, OpKind, PolyKernel, Shape, VariantError, VariantKernel,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TfheError {
    #[error("message {m} out of range for {bits}-bit plaintexts")]
    MessageRange { m: u64, bits: u32 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("index {index} out of range for degree {n}")]
    Index { index: usize, n: usize },
    #[error("lookup table has {found} entries, expected {expected}")]
    LutSize { expected: usize, found: usize },
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Variant(#[from] VariantError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LweCiphertext {
    pub mask: Vec<u64>,
    pub body: u64,
}

impl LweCiphertext {
    pub fn zero(dim: usize) -> Self {
        Self {
            mask: vec![0; dim],
            body: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RlweCiphertext {
    pub a: RingPoly,
    pub b: RingPoly,
}

impl RlweCiphertext {
    /// Noiseless encryption of `m` under any key.
    pub fn trivial(m: RingPoly) -> Self {
        Self {
            a: RingPoly::zero(m.params()),
            b: m,
        }
    }

    pub fn zero(params: RingParams) -> Self {
        Self::trivial(RingPoly::zero(params))
    }

    pub fn add(&self, other: &Self) -> Result<Self, TfheError> {
        Ok(Self {
            a: self.a.add(&other.a)?,
            b: self.b.add(&other.b)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TfheError> {
        Ok(Self {
            a: self.a.sub(&other.a)?,
            b: self.b.sub(&other.b)?,
        })
    }

    pub fn mul_monomial(&self, k: usize) -> Self {
        Self {
            a: self.a.mul_monomial(k),
            b: self.b.mul_monomial(k),
        }
    }
}

/// Gadget-encrypted bit: rows `0..L` carry `mu * g_l` on the mask, rows
/// `L..2L` on the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgswCiphertext {
    pub rows: Vec<RlweCiphertext>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LweSecret(pub Vec<u64>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RlweSecret(pub RingPoly);

impl RlweSecret {
    /// The coefficient vector viewed as an `N`-dimensional LWE key.
    pub fn as_lwe(&self) -> LweSecret {
        LweSecret(self.0.coeffs().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySwitchKey {
    /// `entries[i][j]` encrypts `s'_i * Q / Bks^(j+1)` under the LWE key.
    pub entries: Vec<Vec<LweCiphertext>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapKeys {
    pub bsk: Vec<RgswCiphertext>,
    pub ksk: KeySwitchKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lut {
    pub table: Vec<u64>,
    pub test_poly: RingPoly,
}

impl Lut {
    pub fn new(table: &[u64], params: &TfheParams) -> Result<Self, TfheError> {
        let count = params.message_count();
        if table.len() as u64 != count {
            return Err(TfheError::LutSize {
                expected: count as usize,
                found: table.len(),
            });
        }
        let n = params.n();
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            let slot = (i as u64 * count / n as u64) as usize;
            coeffs.push(encode(table[slot], params)?);
        }
        Ok(Self {
            table: table.to_vec(),
            test_poly: RingPoly::new(params.ring, coeffs)?,
        })
    }

    pub fn from_fn(params: &TfheParams, f: impl Fn(u64) -> u64) -> Result<Self, TfheError> {
        let table: Vec<u64> = (0..params.message_count()).map(f).collect();
        Self::new(&table, params)
    }

    pub fn identity(params: &TfheParams) -> Self {
        Self::from_fn(params, |m| m).expect("in range")
    }
}

pub fn encode(m: u64, params: &TfheParams) -> Result<u64, TfheError> {
    let bits = params.plaintext_bits;
    if m >= params.message_count() {
        return Err(TfheError::MessageRange { m, bits });
    }
    let q = params.q();
    let slot = q >> (bits + 1);
    Ok(m * slot + (slot >> 1))
}

/// Nearest message for a phase; phases outside the positive half wrap.
pub fn decode(phase: u64, params: &TfheParams) -> u64 {
    let shift = params.log_q() - (params.plaintext_bits + 1);
    (phase >> shift) & (params.message_count() - 1)
}

fn noise(rng: &mut SeededRng, std: f64, q: u64) -> u64 {
    from_signed(gaussian(rng, std), q)
}

fn uniform_poly(rng: &mut SeededRng, params: RingParams) -> RingPoly {
    let q = params.q();
    let c = (0..params.n()).map(|_| rng.random_range(0..q)).collect();
    RingPoly::new(params, c).expect("sampled in range")
}

fn noise_poly(rng: &mut SeededRng, params: RingParams, std: f64) -> RingPoly {
    let q = params.q();
    let c = (0..params.n()).map(|_| noise(rng, std, q)).collect();
    RingPoly::new(params, c).expect("reduced")
}

fn binary(rng: &mut SeededRng, len: usize) -> Vec<u64> {
    (0..len).map(|_| rng.random_range(0..2u64)).collect()
}

/// Encrypt a raw torus value.
pub fn lwe_encrypt_raw(
    value: u64,
    secret: &LweSecret,
    q: u64,
    std: f64,
    rng: &mut SeededRng,
) -> LweCiphertext {
    let mask: Vec<u64> = (0..secret.0.len())
        .map(|_| rng.random_range(0..q))
        .collect();
    let dot = dot_mod(&mask, &secret.0, q);
    let body = add_mod(add_mod(dot, value, q), noise(rng, std, q), q);
    LweCiphertext { mask, body }
}

pub fn lwe_encrypt(
    m: u64,
    secret: &LweSecret,
    params: &TfheParams,
    seed: u64,
) -> Result<LweCiphertext, TfheError> {
    let value = encode(m, params)?;
    let mut rng = seeded(seed);
    Ok(lwe_encrypt_raw(
        value,
        secret,
        params.q(),
        params.lwe_noise_std,
        &mut rng,
    ))
}

fn dot_mod(a: &[u64], s: &[u64], q: u64) -> u64 {
    a.iter()
        .zip(s)
        .fold(0, |acc, (&x, &y)| add_mod(acc, mul_mod(x, y, q), q))
}

pub fn lwe_phase(ct: &LweCiphertext, secret: &LweSecret, q: u64) -> Result<u64, TfheError> {
    if ct.dim() != secret.0.len() {
        return Err(TfheError::Dimension {
            expected: secret.0.len(),
            found: ct.dim(),
        });
    }
    Ok(sub_mod(ct.body, dot_mod(&ct.mask, &secret.0, q), q))
}

pub fn lwe_decrypt(
    ct: &LweCiphertext,
    secret: &LweSecret,
    params: &TfheParams,
) -> Result<u64, TfheError> {
    Ok(decode(lwe_phase(ct, secret, params.q())?, params))
}

/// Homomorphic message addition (mod `2^plaintext_bits`).
pub fn lwe_add(
    x: &LweCiphertext,
    y: &LweCiphertext,
    params: &TfheParams,
) -> Result<LweCiphertext, TfheError> {
    if x.dim() != y.dim() {
        return Err(TfheError::Dimension {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let q = params.q();
    let offset = encode(0, params)?;
    let mask = x
        .mask
        .iter()
        .zip(&y.mask)
        .map(|(&a, &b)| add_mod(a, b, q))
        .collect();
    let body = sub_mod(add_mod(x.body, y.body, q), offset, q);
    Ok(LweCiphertext { mask, body })
}

pub fn rlwe_encrypt(
    m: &RingPoly,
    secret: &RlweSecret,
    std: f64,
    rng: &mut SeededRng,
) -> Result<RlweCiphertext, TfheError> {
    let params = secret.0.params();
    let a = uniform_poly(rng, params);
    let e = noise_poly(rng, params, std);
    let b = a.mul(&secret.0)?.add(m)?.add(&e)?;
    Ok(RlweCiphertext { a, b })
}

pub fn rlwe_phase(ct: &RlweCiphertext, secret: &RlweSecret) -> Result<RingPoly, TfheError> {
    Ok(ct.b.sub(&ct.a.mul(&secret.0)?)?)
}

pub fn rgsw_encrypt(
    bit: u64,
    secret: &RlweSecret,
    params: &TfheParams,
    rng: &mut SeededRng,
) -> Result<RgswCiphertext, TfheError> {
    let ring = params.ring;
    let levels = params.decomp_levels as usize;
    let q = ring.q();
    let mut rows = Vec::with_capacity(2 * levels);
    for body in [false, true] {
        for l in 0..levels {
            let zero = RingPoly::zero(ring);
            let mut row = rlwe_encrypt(&zero, secret, params.rlwe_noise_std, rng)?;
            let g = mul_mod(bit, gadget_weight(params, l), q);
            let shift = RingPoly::constant(ring, g);
            if body {
                row.b = row.b.add(&shift)?;
            } else {
                row.a = row.a.add(&shift)?;
            }
            rows.push(row);
        }
    }
    Ok(RgswCiphertext { rows })
}

/// `Q / B^L * B^l`, the weight of digit `l`.
pub fn gadget_weight(params: &TfheParams, l: usize) -> u64 {
    let used = params.decomp_base_log * params.decomp_levels;
    1u64 << (params.log_q() - used + params.decomp_base_log * l as u32)
}

/// Unsigned base-`B` digits of the top `L log B` bits of each coefficient
/// (rounded), least-significant digit first.
pub fn gadget_decompose(p: &RingPoly, params: &TfheParams) -> Vec<RingPoly> {
    let levels = params.decomp_levels as usize;
    let base_log = params.decomp_base_log;
    let used = base_log * params.decomp_levels;
    let drop = params.log_q() - used;
    let mask = (1u64 << base_log) - 1;
    let keep = if used >= 64 {
        u64::MAX
    } else {
        (1u64 << used) - 1
    };
    let mut digits = vec![Vec::with_capacity(p.params().n()); levels];
    for &c in p.coeffs() {
        let rounded = if drop == 0 {
            c
        } else {
            (c >> drop) + ((c >> (drop - 1)) & 1)
        } & keep;
        for (l, d) in digits.iter_mut().enumerate() {
            d.push((rounded >> (base_log * l as u32)) & mask);
        }
    }
    digits
        .into_iter()
        .map(|d| RingPoly::new(p.params(), d).expect("digits below B"))
        .collect()
}

pub fn gadget_recompose(digits: &[RingPoly], params: &TfheParams) -> RingPoly {
    let ring = params.ring;
    let mut acc = RingPoly::zero(ring);
    for (l, d) in digits.iter().enumerate() {
        acc = acc
            .add(&d.scalar_mul(gadget_weight(params, l)))
            .expect("same ring");
    }
    acc
}

/// Descriptor of the inner Toeplitz kernel for a TFHE operation.
pub fn kernel_descriptor(params: &TfheParams, op_kind: OpKind, genome: Genome) -> KernelDescriptor {
    let n = params.n();
    let rows = 2 * params.decomp_levels as usize * n;
    let trip_count = match op_kind {
        OpKind::BlindRotateLoop => params.lwe_dim,
        _ => 2 * params.decomp_levels as usize,
    };
    KernelDescriptor {
        genome,
        op_kind,
        shape: Shape { rows, cols: n },
        trip_count,
        operand_bits: params.decomp_base_log,
    }
}

fn variant_kernel(
    params: &TfheParams,
    op_kind: OpKind,
    genome: Genome,
) -> Result<VariantKernel, TfheError> {
    Ok(VariantKernel::new(kernel_descriptor(
        params, op_kind, genome,
    ))?)
}

pub fn external_product(
    g: &RgswCiphertext,
    c: &RlweCiphertext,
    params: &TfheParams,
    genome: Genome,
) -> Result<RlweCiphertext, TfheError> {
    let kernel = variant_kernel(params, OpKind::ExternalProduct, genome)?;
    external_product_with(g, c, params, &kernel)
}

pub fn external_product_with(
    g: &RgswCiphertext,
    c: &RlweCiphertext,
    params: &TfheParams,
    kernel: &dyn PolyKernel,
) -> Result<RlweCiphertext, TfheError> {
    let levels = params.decomp_levels as usize;
    if g.rows.len() != 2 * levels {
        return Err(TfheError::Dimension {
            expected: 2 * levels,
            found: g.rows.len(),
        });
    }
    let mut digits = gadget_decompose(&c.a, params);
    digits.extend(gadget_decompose(&c.b, params));
    let a_pairs: Vec<(&RingPoly, &RingPoly)> =
        digits.iter().zip(&g.rows).map(|(d, r)| (d, &r.a)).collect();
    let b_pairs: Vec<(&RingPoly, &RingPoly)> =
        digits.iter().zip(&g.rows).map(|(d, r)| (d, &r.b)).collect();
    Ok(RlweCiphertext {
        a: kernel.multiply_accumulate(&a_pairs)?,
        b: kernel.multiply_accumulate(&b_pairs)?,
    })
}

/// `acc + g ⊡ (X^k acc - acc)`: selects `X^k acc` when `g` encrypts 1.
pub fn cmux_rotate(
    g: &RgswCiphertext,
    acc: &RlweCiphertext,
    k: usize,
    params: &TfheParams,
    kernel: &dyn PolyKernel,
) -> Result<RlweCiphertext, TfheError> {
    let diff = acc.mul_monomial(k).sub(acc)?;
    acc.add(&external_product_with(g, &diff, params, kernel)?)
}

/// Round a torus value to `Z_{2N}`.
pub fn mod_switch(x: u64, params: &TfheParams) -> usize {
    let two_n = 2 * params.n() as u64;
    let shift = params.log_q() - two_n.trailing_zeros();
    if shift == 0 {
        return (x % two_n) as usize;
    }
    (((x >> shift) + ((x >> (shift - 1)) & 1)) % two_n) as usize
}

pub fn blind_rotate(
    lut: &Lut,
    ct: &LweCiphertext,
    keys: &BootstrapKeys,
    params: &TfheParams,
    genome: Genome,
) -> Result<RlweCiphertext, TfheError> {
    let kernel = variant_kernel(params, OpKind::BlindRotateLoop, genome)?;
    blind_rotate_with(
        lut,
        ct,
        keys,
        params,
        &kernel,
        genome.unroll_factor as usize,
    )
}

/// Blind rotation with an arbitrary inner kernel; the outer loop over mask
/// elements is processed in blocks of `unroll` with a scalar tail.
pub fn blind_rotate_with(
    lut: &Lut,
    ct: &LweCiphertext,
    keys: &BootstrapKeys,
    params: &TfheParams,
    kernel: &dyn PolyKernel,
    unroll: usize,
) -> Result<RlweCiphertext, TfheError> {
    if ct.dim() != params.lwe_dim || keys.bsk.len() != params.lwe_dim {
        return Err(TfheError::Dimension {
            expected: params.lwe_dim,
            found: if ct.dim() != params.lwe_dim {
                ct.dim()
            } else {
                keys.bsk.len()
            },
        });
    }
    if lut.test_poly.params() != params.ring {
        return Err(RingError::ParamMismatch {
            left: lut.test_poly.params(),
            right: params.ring,
        }
        .into());
    }
    let two_n = 2 * params.n();
    let b = mod_switch(ct.body, params);
    let mut acc = RlweCiphertext::trivial(lut.test_poly.mul_monomial((two_n - b) % two_n));
    let rotations: Vec<usize> = ct.mask.iter().map(|&a| mod_switch(a, params)).collect();
    let step = |acc: RlweCiphertext, i: usize| -> Result<RlweCiphertext, TfheError> {
        if rotations[i] == 0 {
            return Ok(acc);
        }
        cmux_rotate(&keys.bsk[i], &acc, rotations[i], params, kernel)
    };
    let unroll = unroll.max(1);
    let main = ct.dim() - ct.dim() % unroll;
    let mut i = 0;
    while i < main {
        for u in 0..unroll {
            acc = step(acc, i + u)?;
        }
        i += unroll;
    }
    for i in main..ct.dim() {
        acc = step(acc, i)?;
    }
    Ok(acc)
}

/// LWE sample whose phase under the coefficient key equals coefficient
/// `index` of the RLWE phase.
pub fn sample_extract(c: &RlweCiphertext, index: usize) -> Result<LweCiphertext, TfheError> {
    let ring = c.a.params();
    let n = ring.n();
    if index >= n {
        return Err(TfheError::Index { index, n });
    }
    let q = ring.q();
    let a = c.a.coeffs();
    let mask = (0..n)
        .map(|i| {
            if i <= index {
                a[index - i]
            } else {
                sub_mod(0, a[n + index - i], q)
            }
        })
        .collect();
    Ok(LweCiphertext {
        mask,
        body: c.b.coeffs()[index],
    })
}

pub fn key_switch(
    ct: &LweCiphertext,
    ksk: &KeySwitchKey,
    params: &TfheParams,
) -> Result<LweCiphertext, TfheError> {
    if ct.dim() != ksk.entries.len() {
        return Err(TfheError::Dimension {
            expected: ksk.entries.len(),
            found: ct.dim(),
        });
    }
    let q = params.q();
    let base_log = params.ks_base_log;
    let levels = params.ks_levels;
    let used = base_log * levels;
    let drop = params.log_q() - used;
    let digit_mask = (1u64 << base_log) - 1;
    let keep = (1u64 << used) - 1;
    let mut out = LweCiphertext {
        mask: vec![0; params.lwe_dim],
        body: ct.body,
    };
    for (a, row) in ct.mask.iter().zip(&ksk.entries) {
        let rounded = if drop == 0 {
            *a
        } else {
            (a >> drop) + ((a >> (drop - 1)) & 1)
        } & keep;
        for (j, entry) in row.iter().enumerate() {
            // Entry j carries weight Q / Bks^(j+1): its digit is the
            // (levels-1-j)-th from the bottom of the retained bits.
            let d = (rounded >> (base_log * (levels - 1 - j as u32))) & digit_mask;
            if d == 0 {
                continue;
            }
            for (m, e) in out.mask.iter_mut().zip(&entry.mask) {
                *m = sub_mod(*m, mul_mod(d, *e, q), q);
            }
            out.body = sub_mod(out.body, mul_mod(d, entry.body, q), q);
        }
    }
    Ok(out)
}

pub fn keygen(params: &TfheParams, seed: u64) -> (LweSecret, RlweSecret, BootstrapKeys) {
    let mut rng = seeded(derive_seed(seed, 0));
    let lwe = LweSecret(binary(&mut rng, params.lwe_dim));
    let rlwe = RlweSecret(
        RingPoly::new(params.ring, binary(&mut rng, params.n())).expect("binary in range"),
    );
    let mut bsk_rng = seeded(derive_seed(seed, 1));
    let bsk = lwe
        .0
        .iter()
        .map(|&bit| rgsw_encrypt(bit, &rlwe, params, &mut bsk_rng).expect("same ring"))
        .collect();
    let mut ksk_rng = seeded(derive_seed(seed, 2));
    let q = params.q();
    let entries = rlwe
        .0
        .coeffs()
        .iter()
        .map(|&s| {
            (0..params.ks_levels)
                .map(|j| {
                    let weight = 1u64 << (params.log_q() - params.ks_base_log * (j + 1));
                    lwe_encrypt_raw(
                        mul_mod(s, weight, q),
                        &lwe,
                        q,
                        params.lwe_noise_std,
                        &mut ksk_rng,
                    )
                })
                .collect()
        })
        .collect();
    (
        lwe,
        rlwe,
        BootstrapKeys {
            bsk,
            ksk: KeySwitchKey { entries },
        },
    )
}

pub fn bootstrap(
    ct: &LweCiphertext,
    lut: &Lut,
    keys: &BootstrapKeys,
    params: &TfheParams,
    genome: Genome,
) -> Result<LweCiphertext, TfheError> {
    let kernel = variant_kernel(params, OpKind::BlindRotateLoop, genome)?;
    bootstrap_with(
        ct,
        lut,
        keys,
        params,
        &kernel,
        genome.unroll_factor as usize,
    )
}

pub fn bootstrap_with(
    ct: &LweCiphertext,
    lut: &Lut,
    keys: &BootstrapKeys,
    params: &TfheParams,
    kernel: &dyn PolyKernel,
    unroll: usize,
) -> Result<LweCiphertext, TfheError> {
    let acc = blind_rotate_with(lut, ct, keys, params, kernel, unroll)?;
    let extracted = sample_extract(&acc, 0)?;
    key_switch(&extracted, &keys.ksk, params)
}
