//! Parameter acceptance against the published homomorphic-encryption
//! standard table (ternary secrets, classical attacks).

use std::sync::OnceLock;

use serde::Deserialize;

use super::{Gate, GateResult};
use crate::params::{ParamSet, SecurityFlag};

const TABLE_CSV: &str = include_str!("../../data/he_standard.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct SecurityEntry {
    pub ring_degree: usize,
    pub max_log_q: u32,
    pub security_bits: u32,
}

pub fn security_table() -> &'static [SecurityEntry] {
    static TABLE: OnceLock<Vec<SecurityEntry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        csv::Reader::from_reader(TABLE_CSV.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .expect("embedded table parses")
    })
}

/// Largest total `log2 Q` accepted for ring degree `n` at the given level.
pub fn max_log_q(n: usize, security_bits: u32) -> Option<u32> {
    security_table()
        .iter()
        .find(|e| e.ring_degree == n && e.security_bits == security_bits)
        .map(|e| e.max_log_q)
}

/// Whether `(n, log_q)` is within the 128-bit table bound.
pub fn within_standard(n: usize, log_q: f64) -> Result<(), String> {
    match max_log_q(n, 128) {
        None => Err(format!("ring degree {n} has no 128-bit table entry")),
        Some(bound) if log_q > bound as f64 + 1e-9 => Err(format!(
            "log2 Q = {log_q:.2} exceeds the 128-bit bound {bound} for N = {n}"
        )),
        Some(_) => Ok(()),
    }
}

pub fn security_gate(params: &ParamSet, allow_insecure: bool) -> GateResult {
    let n = params.ring_degree();
    let log_q = params.total_log_q();
    match within_standard(n, log_q) {
        Ok(()) => GateResult::pass(Gate::Security),
        Err(reason) => {
            if params.security_flag() == SecurityFlag::InsecureTestOnly && allow_insecure {
                GateResult::pass(Gate::Security).with_note(format!(
                    "insecure_test_only parameters accepted by explicit override ({reason})"
                ))
            } else if params.security_flag() == SecurityFlag::InsecureTestOnly {
                GateResult::fail(
                    Gate::Security,
                    format!("{reason}; parameters are flagged insecure_test_only"),
                )
            } else {
                GateResult::fail(Gate::Security, reason)
            }
        }
    }
}
