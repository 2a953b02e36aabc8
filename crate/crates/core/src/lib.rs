//! Desk-scale TFHE and CKKS kernels exposed as a space of equivalent
//! implementation variants, with a correctness- and security-gated
//! evolutionary autotuner that scores candidates by latency.
//!
//! Parameter sets shipped with the crate are toy-sized and insecure; they
//! exist to exercise the kernels and the search loop, not to protect data.

pub mod ckks;
pub mod eval;
pub mod evolve;
pub mod modring;
pub mod params;
pub mod rng;
pub mod rundir;
pub mod tfhe;
pub mod variants;
