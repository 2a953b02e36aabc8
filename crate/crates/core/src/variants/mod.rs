//! The searchable space of equivalent kernel implementations.
//!
//! A [`Genome`] fixes loop unrolling, column tiling, lane width, cast
//! elision, row/tile scheduling and parameter hoisting for the Toeplitz
//! multiply-accumulate that dominates both the TFHE external product and
//! the CKKS key switch. Every genome computes the same ring product as
//! long as the narrow operand fits the lanes it is loaded into.

mod genome;
mod kernel;

pub use genome::{
    crossover, default_space, enumerate_space, mutate, Genome, GenomeError, GenomeField, Schedule,
    SpaceConstraints, LANE_WIDTHS, SCHEDULES, TILE_SPLITS, UNROLL_FACTORS,
};
pub use kernel::{
    run_variant, KernelDescriptor, OpKind, PolyKernel, ReferenceKernel, Shape, VariantError,
    VariantKernel, ZeroingKernel,
};
