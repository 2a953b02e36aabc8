use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::genome::{Genome, GenomeError, Schedule};
use crate::modring::{
    add_mod, mul_mod, neg_mod, negacyclic_polymul_ref, pow_mod, sub_mod, RingPoly,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VariantError {
    #[error("invalid genome: {0}")]
    Genome(#[from] GenomeError),
    #[error("shape error: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    ToeplitzMatvec,
    ExternalProduct,
    BlindRotateLoop,
    CkksKeyswitchInner,
}

/// `(rows, cols)` of the dominant matrix operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

/// A genome bound to the kernel it is applied to. `trip_count` is the loop
/// the unroll factor acts on; `operand_bits` is the declared range of the
/// narrow (decomposed) operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelDescriptor {
    pub genome: Genome,
    pub op_kind: OpKind,
    pub shape: Shape,
    pub trip_count: usize,
    pub operand_bits: u32,
}

impl KernelDescriptor {
    pub fn validate(&self) -> Result<(), VariantError> {
        self.genome.validate()?;
        if self.shape.rows == 0 || self.shape.cols == 0 {
            return Err(VariantError::Shape(format!(
                "non-positive shape {:?}",
                self.shape
            )));
        }
        if !self
            .shape
            .cols
            .is_multiple_of(self.genome.tile_split as usize)
        {
            return Err(VariantError::Shape(format!(
                "tile_split {} does not divide cols {}",
                self.genome.tile_split, self.shape.cols
            )));
        }
        if self.trip_count == 0 {
            return Err(VariantError::Shape("zero trip count".into()));
        }
        if !(1..=62).contains(&self.operand_bits) {
            return Err(VariantError::Shape(format!(
                "operand_bits {} out of range",
                self.operand_bits
            )));
        }
        Ok(())
    }

    pub fn with_genome(&self, genome: Genome) -> Self {
        Self { genome, ..*self }
    }

    /// Largest narrow-operand value in the declared range.
    pub fn operand_max(&self) -> u64 {
        (1u64 << self.operand_bits) - 1
    }
}

/// A ring multiply-accumulate engine: `sum_k narrow_k * wide_k`.
///
/// The narrow operand is the one the Toeplitz matrix is built from (gadget
/// digits, RNS digits); the wide operand is the key material it multiplies.
pub trait PolyKernel: Send + Sync {
    fn multiply_accumulate(
        &self,
        pairs: &[(&RingPoly, &RingPoly)],
    ) -> Result<RingPoly, VariantError>;

    fn name(&self) -> String;
}

fn check_pairs(pairs: &[(&RingPoly, &RingPoly)]) -> Result<(), VariantError> {
    let Some((first, _)) = pairs.first() else {
        return Err(VariantError::Shape("no operand pairs".into()));
    };
    let params = first.params();
    for (k, (a, b)) in pairs.iter().enumerate() {
        if a.params() != params || b.params() != params {
            return Err(VariantError::Shape(format!(
                "pair {k} has ring {} / {}, expected {params}",
                a.params(),
                b.params()
            )));
        }
    }
    Ok(())
}

/// Schoolbook oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceKernel;

impl PolyKernel for ReferenceKernel {
    fn multiply_accumulate(
        &self,
        pairs: &[(&RingPoly, &RingPoly)],
    ) -> Result<RingPoly, VariantError> {
        check_pairs(pairs)?;
        let mut acc = RingPoly::zero(pairs[0].0.params());
        for (a, b) in pairs {
            let prod = negacyclic_polymul_ref(a, b).expect("params checked");
            acc = acc.add(&prod).expect("params checked");
        }
        Ok(acc)
    }

    fn name(&self) -> String {
        "reference".into()
    }
}

/// Returns the zero polynomial regardless of input. A reward-hacking canary:
/// it is the fastest possible kernel and must never be admitted.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroingKernel;

impl PolyKernel for ZeroingKernel {
    fn multiply_accumulate(
        &self,
        pairs: &[(&RingPoly, &RingPoly)],
    ) -> Result<RingPoly, VariantError> {
        check_pairs(pairs)?;
        Ok(RingPoly::zero(pairs[0].0.params()))
    }

    fn name(&self) -> String {
        "zeroing-canary".into()
    }
}

/// The genome-parameterized Toeplitz kernel.
#[derive(Debug, Clone, Copy)]
pub struct VariantKernel {
    desc: KernelDescriptor,
}

impl VariantKernel {
    pub fn new(desc: KernelDescriptor) -> Result<Self, VariantError> {
        desc.validate()?;
        Ok(Self { desc })
    }

    pub fn descriptor(&self) -> &KernelDescriptor {
        &self.desc
    }
}

impl PolyKernel for VariantKernel {
    fn multiply_accumulate(
        &self,
        pairs: &[(&RingPoly, &RingPoly)],
    ) -> Result<RingPoly, VariantError> {
        run_variant(&self.desc, pairs)
    }

    fn name(&self) -> String {
        format!("variant[{}]", self.desc.genome)
    }
}

/// Run the multiply-accumulate with the loop structure `desc.genome`
/// prescribes.
///
/// With `elide_cast` the narrow operand is read straight into
/// `lane_width_bits`-wide lanes; values that do not fit are silently
/// truncated and the result is wrong. Without it, an explicit conversion
/// pass splits every value into lane-sized chunks, which is always exact.
pub fn run_variant(
    desc: &KernelDescriptor,
    pairs: &[(&RingPoly, &RingPoly)],
) -> Result<RingPoly, VariantError> {
    desc.validate()?;
    check_pairs(pairs)?;
    let params = pairs[0].0.params();
    let n = params.n();
    if n != desc.shape.cols {
        return Err(VariantError::Shape(format!(
            "ring degree {n} does not match descriptor cols {}",
            desc.shape.cols
        )));
    }
    let g = &desc.genome;
    let q = params.q();
    let t = g.tile_split as usize;
    let width = n / t;
    let tiles: Vec<(usize, usize)> = (0..t).map(|k| (k * width, (k + 1) * width)).collect();
    let mut acc = vec![0u64; n];
    let lane_bits = g.lane_width_bits;

    for (narrow, wide) in pairs {
        let narrow = narrow.coeffs();
        let wide = wide.coeffs();
        if g.elide_cast {
            let mask = if lane_bits >= 64 {
                u64::MAX
            } else {
                (1u64 << lane_bits) - 1
            };
            let src = |k: usize| narrow[k] & mask;
            dispatch_unroll(g, &src, wide, q, &tiles, &mut acc);
        } else {
            let chunks = params.residue_bits().div_ceil(lane_bits);
            match lane_bits {
                8 => chunked_pass::<u8>(g, narrow, wide, q, chunks, &tiles, &mut acc),
                16 => chunked_pass::<u16>(g, narrow, wide, q, chunks, &tiles, &mut acc),
                _ => chunked_pass::<u32>(g, narrow, wide, q, chunks, &tiles, &mut acc),
            }
        }
    }
    Ok(RingPoly::new(params, acc).expect("accumulator stays reduced"))
}

trait Lane: Copy {
    const BITS: u32;
    fn truncate(v: u64) -> Self;
    fn widen(self) -> u64;
}

impl Lane for u8 {
    const BITS: u32 = 8;
    fn truncate(v: u64) -> Self {
        v as u8
    }
    fn widen(self) -> u64 {
        self as u64
    }
}

impl Lane for u16 {
    const BITS: u32 = 16;
    fn truncate(v: u64) -> Self {
        v as u16
    }
    fn widen(self) -> u64 {
        self as u64
    }
}

impl Lane for u32 {
    const BITS: u32 = 32;
    fn truncate(v: u64) -> Self {
        v as u32
    }
    fn widen(self) -> u64 {
        self as u64
    }
}

/// Explicit-cast path: materialize each lane chunk, then run one pass per
/// chunk with the wide operand pre-scaled by the chunk's weight.
fn chunked_pass<L: Lane>(
    g: &Genome,
    narrow: &[u64],
    wide: &[u64],
    q: u64,
    chunks: u32,
    tiles: &[(usize, usize)],
    acc: &mut [u64],
) {
    for c in 0..chunks {
        let shift = c * L::BITS;
        let lanes: Vec<L> = narrow.iter().map(|&v| L::truncate(v >> shift)).collect();
        if lanes.iter().all(|l| l.widen() == 0) {
            continue;
        }
        let weight = pow_mod(2, shift as u64, q);
        let scaled: Vec<u64>;
        let wide = if weight == 1 {
            wide
        } else {
            scaled = wide.iter().map(|&b| mul_mod(b, weight, q)).collect();
            &scaled
        };
        let src = |k: usize| lanes[k].widen();
        dispatch_unroll(g, &src, wide, q, tiles, acc);
    }
}

fn dispatch_unroll<F: Fn(usize) -> u64>(
    g: &Genome,
    src: &F,
    wide: &[u64],
    q: u64,
    tiles: &[(usize, usize)],
    acc: &mut [u64],
) {
    match g.unroll_factor {
        1 => toeplitz_pass::<1, F>(g, src, wide, q, tiles, acc),
        2 => toeplitz_pass::<2, F>(g, src, wide, q, tiles, acc),
        4 => toeplitz_pass::<4, F>(g, src, wide, q, tiles, acc),
        _ => toeplitz_pass::<8, F>(g, src, wide, q, tiles, acc),
    }
}

/// `acc += wide^T * T(src)` restricted to the given column tiles.
fn toeplitz_pass<const U: usize, F: Fn(usize) -> u64>(
    g: &Genome,
    src: &F,
    wide: &[u64],
    q: u64,
    tiles: &[(usize, usize)],
    acc: &mut [u64],
) {
    let n = wide.len();
    // Signed diagonal table: entry (i, j) of T lives at index n - 1 + j - i.
    let hoisted: Option<Vec<u64>> = g.hoist_params.then(|| {
        (0..2 * n - 1)
            .map(|idx| {
                if idx >= n - 1 {
                    src(idx - (n - 1))
                } else {
                    neg_mod(src(idx + 1), q)
                }
            })
            .collect()
    });
    // Columns left of the diagonal wrap around and are negated.
    let row = |i: usize, (lo, hi): (usize, usize), acc: &mut [u64]| {
        let b = wide[i];
        if b == 0 {
            return;
        }
        let split = i.clamp(lo, hi);
        match &hoisted {
            Some(table) => {
                let base = n - 1 - i;
                for (slot, &t) in acc[lo..hi].iter_mut().zip(&table[base + lo..base + hi]) {
                    *slot = add_mod(*slot, mul_mod(b, t, q), q);
                }
            }
            None => {
                for (j, slot) in acc.iter_mut().enumerate().take(split).skip(lo) {
                    *slot = sub_mod(*slot, mul_mod(b, src(n + j - i), q), q);
                }
                for (j, slot) in acc.iter_mut().enumerate().take(hi).skip(split) {
                    *slot = add_mod(*slot, mul_mod(b, src(j - i), q), q);
                }
            }
        }
    };
    let main = n - n % U;
    match g.schedule {
        Schedule::Serial => {
            for &tile in tiles {
                let mut i = 0;
                while i < main {
                    for u in 0..U {
                        row(i + u, tile, acc);
                    }
                    i += U;
                }
                for i in main..n {
                    row(i, tile, acc);
                }
            }
        }
        Schedule::Interleaved => {
            let mut i = 0;
            while i < main {
                for &tile in tiles {
                    for u in 0..U {
                        row(i + u, tile, acc);
                    }
                }
                i += U;
            }
            for i in main..n {
                for &tile in tiles {
                    row(i, tile, acc);
                }
            }
        }
    }
}
