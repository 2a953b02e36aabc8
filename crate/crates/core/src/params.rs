//! Scheme parameter sets and their JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modring::{is_prime, RingParams};

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse parameters: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("expected {expected} parameters, found {found}")]
    WrongScheme {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityFlag {
    InsecureTestOnly,
    StandardValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfheParams {
    pub lwe_dim: usize,
    /// RLWE ring; its modulus is shared by the LWE samples.
    pub ring: RingParams,
    pub decomp_base_log: u32,
    pub decomp_levels: u32,
    pub ks_base_log: u32,
    pub ks_levels: u32,
    pub lwe_noise_std: f64,
    pub rlwe_noise_std: f64,
    pub plaintext_bits: u32,
    pub security_flag: SecurityFlag,
}

impl TfheParams {
    pub fn toy() -> Self {
        Self {
            lwe_dim: 16,
            ring: RingParams::new(64, 1 << 32).expect("valid ring"),
            decomp_base_log: 8,
            decomp_levels: 4,
            ks_base_log: 4,
            ks_levels: 7,
            lwe_noise_std: 1024.0,
            rlwe_noise_std: 16.0,
            plaintext_bits: 3,
            security_flag: SecurityFlag::InsecureTestOnly,
        }
    }

    pub fn q(&self) -> u64 {
        self.ring.q()
    }

    pub fn log_q(&self) -> u32 {
        self.ring.q().trailing_zeros()
    }

    pub fn n(&self) -> usize {
        self.ring.n()
    }

    pub fn message_count(&self) -> u64 {
        1 << self.plaintext_bits
    }

    /// Structural problems, empty when the set is usable.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let q = self.ring.q();
        if !q.is_power_of_two() {
            out.push(format!("modulus {q} is not a power of two"));
            return out;
        }
        let log_q = self.log_q();
        if self.lwe_dim == 0 {
            out.push("lwe_dim must be positive".into());
        }
        if self.decomp_base_log == 0 || self.decomp_levels == 0 {
            out.push("decomposition base and levels must be positive".into());
        } else if self.decomp_base_log as u64 * self.decomp_levels as u64 > log_q as u64 {
            out.push(format!(
                "B^L = 2^{} exceeds Q = 2^{log_q}",
                self.decomp_base_log * self.decomp_levels
            ));
        }
        if self.ks_base_log == 0 || self.ks_levels == 0 {
            out.push("key-switch base and levels must be positive".into());
        } else if self.ks_base_log as u64 * self.ks_levels as u64 > log_q as u64 {
            out.push(format!(
                "key-switch base^levels = 2^{} exceeds Q = 2^{log_q}",
                self.ks_base_log * self.ks_levels
            ));
        }
        if self.plaintext_bits == 0 {
            out.push("plaintext_bits must be at least 1".into());
        }
        // Messages plus the padding bit must fit the test polynomial.
        let slots = 2u64.saturating_pow(self.plaintext_bits + 1);
        if slots > self.ring.n() as u64 {
            out.push(format!(
                "2^{} message slots do not fit ring degree {}",
                self.plaintext_bits + 1,
                self.ring.n()
            ));
        }
        if (2 * self.ring.n()) as u64 > q {
            out.push("2N exceeds the modulus".into());
        }
        for (name, std) in [
            ("lwe_noise_std", self.lwe_noise_std),
            ("rlwe_noise_std", self.rlwe_noise_std),
        ] {
            if !std.is_finite() || std < 0.0 {
                out.push(format!("{name} must be finite and non-negative"));
            }
        }
        out
    }

    /// Same parameters with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            lwe_noise_std: 0.0,
            rlwe_noise_std: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CkksParams {
    pub ring_degree: usize,
    pub modulus_chain: Vec<u64>,
    pub special_primes: Vec<u64>,
    /// `log2` of the encoding scale.
    pub scale_bits: u32,
    pub noise_std: f64,
    pub security_flag: SecurityFlag,
}

impl CkksParams {
    pub fn toy() -> Self {
        Self {
            ring_degree: 64,
            modulus_chain: vec![1073741953, 1073742209, 1073742721],
            special_primes: vec![1073744257],
            scale_bits: 30,
            noise_std: 3.2,
            security_flag: SecurityFlag::InsecureTestOnly,
        }
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    pub fn slot_count(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn levels(&self) -> usize {
        self.modulus_chain.len()
    }

    pub fn ring(&self, q: u64) -> RingParams {
        RingParams::new(self.ring_degree, q).expect("checked parameters")
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.ring_degree;
        if n < 4 || !n.is_power_of_two() {
            out.push(format!("ring degree {n} must be a power of two >= 4"));
            return out;
        }
        if self.modulus_chain.is_empty() {
            out.push("modulus chain is empty".into());
        }
        if self.special_primes.len() != 1 {
            out.push(format!(
                "exactly one special prime is supported, found {}",
                self.special_primes.len()
            ));
        }
        let all: Vec<u64> = self
            .modulus_chain
            .iter()
            .chain(&self.special_primes)
            .copied()
            .collect();
        for &p in &all {
            if p >= 1 << 62 || !is_prime(p) {
                out.push(format!("{p} is not a word-size prime"));
            } else if p % (2 * n as u64) != 1 {
                out.push(format!("{p} is not 1 mod 2N = {}", 2 * n));
            }
        }
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            out.push("moduli are not distinct".into());
        }
        if self.scale_bits == 0 || self.scale_bits >= 62 {
            out.push(format!("scale_bits {} out of range", self.scale_bits));
        } else if let Some(&min) = self.modulus_chain.iter().min() {
            if (1u64 << self.scale_bits) > min {
                out.push(format!(
                    "scale 2^{} exceeds smallest prime {min}",
                    self.scale_bits
                ));
            }
        }
        // Exact CRT lifting uses 128-bit words.
        let bits: f64 = all.iter().map(|&p| (p as f64).log2()).sum();
        if bits > 124.0 {
            out.push(format!("total modulus of {bits:.1} bits exceeds 124"));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            out.push("noise_std must be finite and non-negative".into());
        }
        out
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise_std: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ParamSet {
    Tfhe(TfheParams),
    Ckks(CkksParams),
}

impl ParamSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ParamsError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn scheme(&self) -> &'static str {
        match self {
            ParamSet::Tfhe(_) => "tfhe",
            ParamSet::Ckks(_) => "ckks",
        }
    }

    pub fn ring_degree(&self) -> usize {
        match self {
            ParamSet::Tfhe(p) => p.ring.n(),
            ParamSet::Ckks(p) => p.ring_degree,
        }
    }

    /// Total ciphertext modulus size in bits, special primes included.
    pub fn total_log_q(&self) -> f64 {
        match self {
            ParamSet::Tfhe(p) => (p.ring.q() as f64).log2(),
            ParamSet::Ckks(p) => p
                .modulus_chain
                .iter()
                .chain(&p.special_primes)
                .map(|&q| (q as f64).log2())
                .sum(),
        }
    }

    pub fn security_flag(&self) -> SecurityFlag {
        match self {
            ParamSet::Tfhe(p) => p.security_flag,
            ParamSet::Ckks(p) => p.security_flag,
        }
    }

    pub fn check(&self) -> Vec<String> {
        match self {
            ParamSet::Tfhe(p) => p.check(),
            ParamSet::Ckks(p) => p.check(),
        }
    }

    pub fn into_tfhe(self) -> Result<TfheParams, ParamsError> {
        match self {
            ParamSet::Tfhe(p) => Ok(p),
            other => Err(ParamsError::WrongScheme {
                expected: "tfhe",
                found: other.scheme(),
            }),
        }
    }

    pub fn into_ckks(self) -> Result<CkksParams, ParamsError> {
        match self {
            ParamSet::Ckks(p) => Ok(p),
            other => Err(ParamsError::WrongScheme {
                expected: "ckks",
                found: other.scheme(),
            }),
        }
    }
}
