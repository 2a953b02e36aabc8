//! Exact arithmetic over `Z_q` and the negacyclic ring `Z_q[X]/(X^n + 1)`.
//!
//! Residues are unsigned and always reduced into `[0, q)`. Products are
//! formed in 128-bit intermediates, which is exact for every `q <= 2^62`.
//! Polynomial products are computed either by the schoolbook reference
//! (`negacyclic_polymul_ref`) or through the Toeplitz reformulation
//! (`toeplitz_polymul`); the two must agree bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported coefficient modulus.
pub const MAX_MODULUS: u64 = 1 << 62;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("ring degree {0} must be a power of two and at least 2")]
    InvalidDegree(usize),
    #[error("modulus {0} must lie in [2, 2^62]")]
    InvalidModulus(u64),
    #[error("ring parameters differ: {left} vs {right}")]
    ParamMismatch { left: RingParams, right: RingParams },
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficient {value} at index {index} is not reduced mod {q}")]
    Unreduced { index: usize, value: u64, q: u64 },
    #[error("automorphism index {k} is not odd in [1, {two_n})")]
    InvalidAutomorphism { k: usize, two_n: usize },
}

#[inline]
fn is_pow2(x: u64) -> bool {
    x != 0 && x & (x - 1) == 0
}

/// `a * b mod q` for reduced inputs.
#[inline]
pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    if is_pow2(q) {
        a.wrapping_mul(b) & (q - 1)
    } else if q <= 1 << 32 {
        (a * b) % q
    } else {
        ((a as u128 * b as u128) % q as u128) as u64
    }
}

#[inline]
pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    // a, b < q <= 2^62 so the sum cannot overflow.
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

#[inline]
pub fn neg_mod(a: u64, q: u64) -> u64 {
    if a == 0 {
        0
    } else {
        q - a
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Modular inverse by the extended Euclidean algorithm; `None` when
/// `gcd(a, q) != 1`.
pub fn inv_mod(a: u64, q: u64) -> Option<u64> {
    let (mut r0, mut r1) = (q as i128, (a % q) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let quot = r0 / r1;
        (r0, r1) = (r1, r0 - quot * r1);
        (t0, t1) = (t1, t0 - quot * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(q as i128) as u64)
}

/// Reduce a signed integer into `[0, q)`.
#[inline]
pub fn from_signed(x: i64, q: u64) -> u64 {
    (x as i128).rem_euclid(q as i128) as u64
}

/// Centered representative of `x mod q` in `(-q/2, q/2]`.
#[inline]
pub fn centered(x: u64, q: u64) -> i64 {
    if x > q / 2 {
        -((q - x) as i64)
    } else {
        x as i64
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Ring degree and coefficient modulus of `Z_q[X]/(X^n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRingParams", deny_unknown_fields)]
pub struct RingParams {
    n: usize,
    q: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRingParams {
    n: usize,
    q: u64,
}

impl TryFrom<RawRingParams> for RingParams {
    type Error = RingError;
    fn try_from(raw: RawRingParams) -> Result<Self, Self::Error> {
        RingParams::new(raw.n, raw.q)
    }
}

impl std::fmt::Display for RingParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(n={}, q={})", self.n, self.q)
    }
}

impl RingParams {
    pub fn new(n: usize, q: u64) -> Result<Self, RingError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(RingError::InvalidDegree(n));
        }
        if !(2..=MAX_MODULUS).contains(&q) {
            return Err(RingError::InvalidModulus(q));
        }
        Ok(Self { n, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Bit length of the largest residue, `q - 1`.
    pub fn residue_bits(&self) -> u32 {
        64 - (self.q - 1).leading_zeros()
    }

    fn check_same(&self, other: &RingParams) -> Result<(), RingError> {
        if self != other {
            return Err(RingError::ParamMismatch {
                left: *self,
                right: *other,
            });
        }
        Ok(())
    }
}

/// An element of `Z_q[X]/(X^n + 1)`; `coeffs[i]` is the coefficient of `X^i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RingPoly {
    params: RingParams,
    coeffs: Vec<u64>,
}

impl RingPoly {
    pub fn new(params: RingParams, coeffs: Vec<u64>) -> Result<Self, RingError> {
        if coeffs.len() != params.n {
            return Err(RingError::LengthMismatch {
                expected: params.n,
                got: coeffs.len(),
            });
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, &c)| c >= params.q) {
            return Err(RingError::Unreduced {
                index,
                value,
                q: params.q,
            });
        }
        Ok(Self { params, coeffs })
    }

    /// Reduces arbitrary words mod q.
    pub fn from_reduced_words(params: RingParams, words: &[u64]) -> Result<Self, RingError> {
        let coeffs = words.iter().map(|&w| w % params.q).collect();
        Self::new(params, coeffs)
    }

    pub fn from_signed(params: RingParams, values: &[i64]) -> Result<Self, RingError> {
        let coeffs = values.iter().map(|&v| from_signed(v, params.q)).collect();
        Self::new(params, coeffs)
    }

    pub fn zero(params: RingParams) -> Self {
        Self {
            params,
            coeffs: vec![0; params.n],
        }
    }

    /// The monomial `X^k` for `k` in `[0, n)`.
    pub fn monomial(params: RingParams, k: usize) -> Self {
        let mut p = Self::zero(params);
        p.coeffs[k % params.n] = 1;
        p
    }

    pub fn constant(params: RingParams, c: u64) -> Self {
        let mut p = Self::zero(params);
        p.coeffs[0] = c % params.q;
        p
    }

    pub fn params(&self) -> RingParams {
        self.params
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn add(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.params.check_same(&other.params)?;
        let q = self.params.q;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| add_mod(a, b, q))
            .collect();
        Ok(Self {
            params: self.params,
            coeffs,
        })
    }

    pub fn sub(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.params.check_same(&other.params)?;
        let q = self.params.q;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| sub_mod(a, b, q))
            .collect();
        Ok(Self {
            params: self.params,
            coeffs,
        })
    }

    pub fn neg(&self) -> RingPoly {
        let q = self.params.q;
        Self {
            params: self.params,
            coeffs: self.coeffs.iter().map(|&a| neg_mod(a, q)).collect(),
        }
    }

    pub fn scalar_mul(&self, c: u64) -> RingPoly {
        let q = self.params.q;
        let c = c % q;
        Self {
            params: self.params,
            coeffs: self.coeffs.iter().map(|&a| mul_mod(a, c, q)).collect(),
        }
    }

    /// Ring product computed by walking the Toeplitz entry rule without
    /// materializing the matrix. Equal to [`negacyclic_polymul_ref`].
    pub fn mul(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.params.check_same(&other.params)?;
        let n = self.params.n;
        let q = self.params.q;
        let a = &self.coeffs;
        let mut out = vec![0u64; n];
        for (i, &b) in other.coeffs.iter().enumerate() {
            if b == 0 {
                continue;
            }
            // Row i of T(a): a_{j-i} for j >= i, -a_{n+j-i} below the diagonal.
            for j in 0..i {
                out[j] = sub_mod(out[j], mul_mod(b, a[n + j - i], q), q);
            }
            for j in i..n {
                out[j] = add_mod(out[j], mul_mod(b, a[j - i], q), q);
            }
        }
        Ok(Self {
            params: self.params,
            coeffs: out,
        })
    }

    /// Multiply by `X^k` for any `k` in `[0, 2n)`; wrapped coefficients are
    /// negated.
    pub fn mul_monomial(&self, k: usize) -> RingPoly {
        let n = self.params.n;
        let q = self.params.q;
        let k = k % (2 * n);
        let mut out = vec![0u64; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let e = i + k;
            let (idx, negate) = if e < n {
                (e, false)
            } else if e < 2 * n {
                (e - n, true)
            } else {
                (e - 2 * n, false)
            };
            out[idx] = if negate { neg_mod(c, q) } else { c };
        }
        Self {
            params: self.params,
            coeffs: out,
        }
    }

    /// Centered infinity norm.
    pub fn inf_norm(&self) -> u64 {
        self.coeffs
            .iter()
            .map(|&c| centered(c, self.params.q).unsigned_abs())
            .max()
            .unwrap_or(0)
    }
}

/// Dense `n x n` negacyclic Toeplitz matrix built from a source polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzMatrix {
    params: RingParams,
    rows: Vec<u64>,
}

impl ToeplitzMatrix {
    pub fn params(&self) -> RingParams {
        self.params
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.rows[i * self.params.n + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let n = self.params.n;
        &self.rows[i * n..(i + 1) * n]
    }

    /// Row-vector times matrix, `b^T * T`, reduced mod q.
    pub fn vec_mul(&self, b: &RingPoly) -> Result<RingPoly, RingError> {
        self.params.check_same(&b.params)?;
        let n = self.params.n;
        let q = self.params.q;
        let mut out = vec![0u64; n];
        for (i, &bi) in b.coeffs.iter().enumerate() {
            for (o, &t) in out.iter_mut().zip(self.row(i)) {
                *o = add_mod(*o, mul_mod(bi, t, q), q);
            }
        }
        Ok(RingPoly {
            params: self.params,
            coeffs: out,
        })
    }
}

/// Schoolbook product reduced modulo `X^n + 1`. Ground truth for every
/// kernel variant.
pub fn negacyclic_polymul_ref(a: &RingPoly, b: &RingPoly) -> Result<RingPoly, RingError> {
    a.params.check_same(&b.params)?;
    let n = a.params.n;
    let q = a.params.q;
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let prod = mul_mod(a.coeffs[i], b.coeffs[j], q);
            let k = i + j;
            if k < n {
                out[k] = add_mod(out[k], prod, q);
            } else {
                out[k - n] = sub_mod(out[k - n], prod, q);
            }
        }
    }
    Ok(RingPoly {
        params: a.params,
        coeffs: out,
    })
}

/// Row 0 is `a`; each following row is the previous one rotated right by one
/// with the wrapped entry negated.
pub fn build_toeplitz(a: &RingPoly) -> ToeplitzMatrix {
    let n = a.params.n;
    let q = a.params.q;
    let mut rows = Vec::with_capacity(n * n);
    rows.extend_from_slice(&a.coeffs);
    for i in 1..n {
        let prev = (i - 1) * n;
        rows.push(neg_mod(rows[prev + n - 1], q));
        for j in 1..n {
            rows.push(rows[prev + j - 1]);
        }
    }
    ToeplitzMatrix {
        params: a.params,
        rows,
    }
}

/// `b^T * T(a)`, which equals `a * b` in the ring.
pub fn toeplitz_polymul(a: &RingPoly, b: &RingPoly) -> Result<RingPoly, RingError> {
    a.params.check_same(&b.params)?;
    build_toeplitz(a).vec_mul(b)
}

/// `a(X^k)` for odd `k` in `[1, 2n)`.
pub fn automorphism_ref(a: &RingPoly, k: usize) -> Result<RingPoly, RingError> {
    let n = a.params.n;
    let two_n = 2 * n;
    if k == 0 || k >= two_n || k.is_multiple_of(2) {
        return Err(RingError::InvalidAutomorphism { k, two_n });
    }
    let q = a.params.q;
    let mut out = vec![0u64; n];
    for (i, &c) in a.coeffs.iter().enumerate() {
        let e = (i * k) % two_n;
        if e < n {
            out[e] = c;
        } else {
            out[e - n] = neg_mod(c, q);
        }
    }
    Ok(RingPoly {
        params: a.params,
        coeffs: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(n: usize, q: u64, c: &[u64]) -> RingPoly {
        RingPoly::new(RingParams::new(n, q).unwrap(), c.to_vec()).unwrap()
    }

    fn random_poly(params: RingParams, rng: &mut impl Rng) -> RingPoly {
        let c = (0..params.n())
            .map(|_| rng.random_range(0..params.q()))
            .collect();
        RingPoly::new(params, c).unwrap()
    }

    /// Independent oracle: plain signed convolution over i128, reduced at the end.
    fn convolution_oracle(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
        let n = a.len();
        let mut acc = vec![0i128; n];
        for i in 0..n {
            for j in 0..n {
                let prod = a[i] as i128 * b[j] as i128;
                if i + j < n {
                    acc[i + j] += prod;
                } else {
                    acc[i + j - n] -= prod;
                }
            }
        }
        acc.iter().map(|v| v.rem_euclid(q as i128) as u64).collect()
    }

    #[test]
    fn params_validation() {
        assert_eq!(RingParams::new(3, 17), Err(RingError::InvalidDegree(3)));
        assert_eq!(RingParams::new(1, 17), Err(RingError::InvalidDegree(1)));
        assert_eq!(RingParams::new(4, 1), Err(RingError::InvalidModulus(1)));
        assert!(RingParams::new(4, MAX_MODULUS + 1).is_err());
        assert!(RingParams::new(4, MAX_MODULUS).is_ok());
        assert!(RingPoly::new(RingParams::new(2, 5).unwrap(), vec![5, 0]).is_err());
        assert!(RingPoly::new(RingParams::new(2, 5).unwrap(), vec![1]).is_err());
    }

    #[test]
    fn params_json_rejects_invalid() {
        assert!(serde_json::from_str::<RingParams>(r#"{"n":6,"q":17}"#).is_err());
        assert!(serde_json::from_str::<RingParams>(r#"{"n":4,"q":17,"x":1}"#).is_err());
        let ok: RingParams = serde_json::from_str(r#"{"n":4,"q":17}"#).unwrap();
        assert_eq!(ok, RingParams::new(4, 17).unwrap());
    }

    #[test]
    fn polymul_ref_examples() {
        let a = p(4, 17, &[1, 0, 0, 0]);
        let b = p(4, 17, &[3, 5, 7, 11]);
        assert_eq!(
            negacyclic_polymul_ref(&a, &b).unwrap().coeffs(),
            &[3, 5, 7, 11]
        );

        let x = p(4, 17, &[0, 1, 0, 0]);
        let x3 = p(4, 17, &[0, 0, 0, 1]);
        assert_eq!(
            negacyclic_polymul_ref(&x, &x3).unwrap().coeffs(),
            &[16, 0, 0, 0]
        );

        // (1 + X)(X^2 + X^3) = X^2 + 2X^3 + X^4 = -1 + X^2 + 2X^3
        let a = p(4, 17, &[1, 1, 0, 0]);
        let b = p(4, 17, &[0, 0, 1, 1]);
        let expected = convolution_oracle(a.coeffs(), b.coeffs(), 17);
        assert_eq!(expected, vec![16, 0, 1, 2]);
        assert_eq!(
            negacyclic_polymul_ref(&a, &b).unwrap().coeffs(),
            &expected[..]
        );
    }

    #[test]
    fn mismatched_params_rejected() {
        let a = p(4, 17, &[1, 0, 0, 0]);
        let b = p(4, 19, &[1, 0, 0, 0]);
        assert!(matches!(
            negacyclic_polymul_ref(&a, &b),
            Err(RingError::ParamMismatch { .. })
        ));
        assert!(toeplitz_polymul(&a, &b).is_err());
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let t = build_toeplitz(&p(2, 17, &[2, 3]));
        assert_eq!(t.row(0), &[2, 3]);
        assert_eq!(t.row(1), &[14, 2]);

        let z = build_toeplitz(&p(2, 97, &[0, 0]));
        assert!(z.rows.iter().all(|&v| v == 0));

        let c = toeplitz_polymul(&p(2, 17, &[2, 3]), &p(2, 17, &[1, 1])).unwrap();
        assert_eq!(c.coeffs(), &[16, 5]);
        assert_eq!(
            c,
            negacyclic_polymul_ref(&p(2, 17, &[2, 3]), &p(2, 17, &[1, 1])).unwrap()
        );

        let id = p(4, 17, &[1, 0, 0, 0]);
        let b = p(4, 17, &[4, 9, 0, 16]);
        assert_eq!(toeplitz_polymul(&id, &b).unwrap(), b);
    }

    #[test]
    fn toeplitz_entry_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = RingParams::new(4, 257).unwrap();
        let a = random_poly(params, &mut rng);
        let t = build_toeplitz(&a);
        for i in 0..4 {
            for j in 0..4 {
                let want = if j >= i {
                    a.coeffs()[j - i]
                } else {
                    (257 - a.coeffs()[4 + j - i]) % 257
                };
                assert_eq!(t.get(i, j), want, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn toeplitz_random_sweep_q_fermat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = RingParams::new(8, (1 << 16) + 1).unwrap();
        for _ in 0..100 {
            let a = random_poly(params, &mut rng);
            let b = random_poly(params, &mut rng);
            assert_eq!(
                toeplitz_polymul(&a, &b).unwrap(),
                negacyclic_polymul_ref(&a, &b).unwrap()
            );
        }
    }

    #[test]
    fn automorphism_examples() {
        let a = p(4, 17, &[0, 1, 0, 0]);
        assert_eq!(automorphism_ref(&a, 3).unwrap().coeffs(), &[0, 0, 0, 1]);
        let b = p(4, 17, &[5, 6, 7, 8]);
        assert_eq!(automorphism_ref(&b, 1).unwrap(), b);
        // X -> X^5: X^1 -> X^5 = -X
        assert_eq!(automorphism_ref(&a, 5).unwrap().coeffs(), &[0, 16, 0, 0]);
        assert!(matches!(
            automorphism_ref(&a, 2),
            Err(RingError::InvalidAutomorphism { .. })
        ));
        assert!(automorphism_ref(&a, 8).is_err());
        assert!(automorphism_ref(&a, 0).is_err());
    }

    #[test]
    fn mul_monomial_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = RingParams::new(8, 97).unwrap();
        let a = random_poly(params, &mut rng);
        for k in 0..16 {
            let mono = if k < 8 {
                RingPoly::monomial(params, k)
            } else {
                RingPoly::monomial(params, k - 8).neg()
            };
            assert_eq!(a.mul_monomial(k), a.mul(&mono).unwrap(), "k={k}");
        }
    }

    #[test]
    fn modular_helpers() {
        assert_eq!(inv_mod(3, 17), Some(6));
        assert_eq!(inv_mod(4, 8), None);
        assert_eq!(pow_mod(5, 0, 7), 1);
        assert_eq!(pow_mod(2, 10, 1_000_003), 1024);
        assert_eq!(centered(16, 17), -1);
        assert_eq!(centered(8, 17), 8);
        assert_eq!(from_signed(-3, 17), 14);
        assert!(is_prime(1073741953));
        assert!(is_prime(2));
        assert!(!is_prime(1073741953 * 3));
        assert!(!is_prime(3215031751)); // strong pseudoprime to bases 2,3,5,7
        assert_eq!(mul_mod(1 << 40, 1 << 40, MAX_MODULUS - 57), {
            ((1u128 << 80) % (MAX_MODULUS - 57) as u128) as u64
        });
    }

    fn degree_and_modulus() -> impl Strategy<Value = RingParams> {
        (1u32..=8, 2u64..=MAX_MODULUS)
            .prop_map(|(log_n, q)| RingParams::new(1 << log_n, q).unwrap())
    }

    fn poly_pair() -> impl Strategy<Value = (RingPoly, RingPoly)> {
        pair_in(degree_and_modulus())
    }

    fn pair_in(
        params: impl Strategy<Value = RingParams>,
    ) -> impl Strategy<Value = (RingPoly, RingPoly)> {
        params.prop_flat_map(|params| {
            let n = params.n();
            let q = params.q();
            (
                prop::collection::vec(0..q, n),
                prop::collection::vec(0..q, n),
            )
                .prop_map(move |(a, b)| {
                    (
                        RingPoly::new(params, a).unwrap(),
                        RingPoly::new(params, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn toeplitz_equals_reference((a, b) in poly_pair()) {
            let r = negacyclic_polymul_ref(&a, &b).unwrap();
            prop_assert_eq!(&toeplitz_polymul(&a, &b).unwrap(), &r);
            prop_assert_eq!(&a.mul(&b).unwrap(), &r);
        }

        #[test]
        fn reference_matches_signed_convolution((a, b) in pair_in(
            (1u32..=8, 2u64..(1 << 40)).prop_map(|(l, q)| RingParams::new(1 << l, q).unwrap())
        )) {
            let want = convolution_oracle(a.coeffs(), b.coeffs(), a.params().q());
            let got = negacyclic_polymul_ref(&a, &b).unwrap();
            prop_assert_eq!(got.coeffs(), &want[..]);
        }

        #[test]
        fn ring_laws(seed in any::<u64>(), log_n in 1u32..=6, q in 2u64..(1 << 40)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = RingParams::new(1 << log_n, q).unwrap();
            let a = random_poly(params, &mut rng);
            let b = random_poly(params, &mut rng);
            let c = random_poly(params, &mut rng);
            let ab = negacyclic_polymul_ref(&a, &b).unwrap();
            prop_assert_eq!(&ab, &negacyclic_polymul_ref(&b, &a).unwrap());
            let ab_c = negacyclic_polymul_ref(&ab, &c).unwrap();
            let bc = negacyclic_polymul_ref(&b, &c).unwrap();
            prop_assert_eq!(ab_c, negacyclic_polymul_ref(&a, &bc).unwrap());
            let one = RingPoly::constant(params, 1);
            prop_assert_eq!(negacyclic_polymul_ref(&one, &a).unwrap(), a);
        }

        #[test]
        fn negacyclic_monomial_law(log_n in 1u32..=8, i_frac in 0.0f64..1.0, j_frac in 0.0f64..1.0) {
            let n = 1usize << log_n;
            let q = 65537;
            let params = RingParams::new(n, q).unwrap();
            let i = ((n as f64) * i_frac) as usize % n;
            let j = ((n as f64) * j_frac) as usize % n;
            let prod = negacyclic_polymul_ref(
                &RingPoly::monomial(params, i),
                &RingPoly::monomial(params, j),
            ).unwrap();
            let mut want = RingPoly::monomial(params, (i + j) % n);
            if i + j >= n {
                want = want.neg();
            }
            prop_assert_eq!(prod, want);
        }

        #[test]
        fn automorphism_is_ring_homomorphism(seed in any::<u64>(), log_n in 1u32..=6, k_half in 0usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1usize << log_n;
            let params = RingParams::new(n, 12289).unwrap();
            let k = (2 * k_half + 1) % (2 * n);
            let a = random_poly(params, &mut rng);
            let b = random_poly(params, &mut rng);
            let lhs = automorphism_ref(&negacyclic_polymul_ref(&a, &b).unwrap(), k).unwrap();
            let rhs = negacyclic_polymul_ref(
                &automorphism_ref(&a, k).unwrap(),
                &automorphism_ref(&b, k).unwrap(),
            ).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn automorphism_composes(seed in any::<u64>(), log_n in 1u32..=6, k1h in 0usize..64, k2h in 0usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1usize << log_n;
            let params = RingParams::new(n, 7681).unwrap();
            let (k1, k2) = ((2 * k1h + 1) % (2 * n), (2 * k2h + 1) % (2 * n));
            let a = random_poly(params, &mut rng);
            let twice = automorphism_ref(&automorphism_ref(&a, k1).unwrap(), k2).unwrap();
            prop_assert_eq!(twice, automorphism_ref(&a, (k1 * k2) % (2 * n)).unwrap());
        }
    }
}
