use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const UNROLL_FACTORS: [u32; 4] = [1, 2, 4, 8];
pub const TILE_SPLITS: [u32; 3] = [1, 2, 4];
pub const LANE_WIDTHS: [u32; 3] = [8, 16, 32];
pub const SCHEDULES: [Schedule; 2] = [Schedule::Serial, Schedule::Interleaved];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenomeError {
    #[error("unroll_factor {0} not in {{1,2,4,8}}")]
    Unroll(u32),
    #[error("tile_split {0} not in {{1,2,4}}")]
    Tile(u32),
    #[error("lane_width_bits {0} not in {{8,16,32}}")]
    LaneWidth(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Serial,
    Interleaved,
}

/// One point of the kernel-variant space. All genomes compute the same
/// function on in-range operands; they differ in loop structure and in how
/// the narrow operand reaches the lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawGenome")]
pub struct Genome {
    pub unroll_factor: u32,
    pub tile_split: u32,
    pub lane_width_bits: u32,
    pub elide_cast: bool,
    pub schedule: Schedule,
    pub hoist_params: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenome {
    unroll_factor: u32,
    tile_split: u32,
    lane_width_bits: u32,
    elide_cast: bool,
    schedule: Schedule,
    hoist_params: bool,
}

impl TryFrom<RawGenome> for Genome {
    type Error = GenomeError;
    fn try_from(r: RawGenome) -> Result<Self, Self::Error> {
        let g = Genome {
            unroll_factor: r.unroll_factor,
            tile_split: r.tile_split,
            lane_width_bits: r.lane_width_bits,
            elide_cast: r.elide_cast,
            schedule: r.schedule,
            hoist_params: r.hoist_params,
        };
        g.validate()?;
        Ok(g)
    }
}

/// The six mutable dimensions of a genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GenomeField {
    UnrollFactor,
    TileSplit,
    LaneWidthBits,
    ElideCast,
    Schedule,
    HoistParams,
}

impl GenomeField {
    pub const ALL: [GenomeField; 6] = [
        GenomeField::UnrollFactor,
        GenomeField::TileSplit,
        GenomeField::LaneWidthBits,
        GenomeField::ElideCast,
        GenomeField::Schedule,
        GenomeField::HoistParams,
    ];
}

impl Genome {
    /// The hand-written baseline: serial, untiled, full-width lanes with an
    /// explicit cast.
    pub const fn reference() -> Self {
        Genome {
            unroll_factor: 1,
            tile_split: 1,
            lane_width_bits: 32,
            elide_cast: false,
            schedule: Schedule::Serial,
            hoist_params: false,
        }
    }

    pub fn validate(&self) -> Result<(), GenomeError> {
        if !UNROLL_FACTORS.contains(&self.unroll_factor) {
            return Err(GenomeError::Unroll(self.unroll_factor));
        }
        if !TILE_SPLITS.contains(&self.tile_split) {
            return Err(GenomeError::Tile(self.tile_split));
        }
        if !LANE_WIDTHS.contains(&self.lane_width_bits) {
            return Err(GenomeError::LaneWidth(self.lane_width_bits));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("genome serializes")
    }

    /// Fields whose values differ.
    pub fn diff(&self, other: &Genome) -> Vec<GenomeField> {
        GenomeField::ALL
            .into_iter()
            .filter(|f| self.field_index(*f) != other.field_index(*f))
            .collect()
    }

    pub fn hamming(&self, other: &Genome) -> usize {
        self.diff(other).len()
    }

    /// Position of this field's value within its domain.
    fn field_index(&self, f: GenomeField) -> usize {
        let pos = |xs: &[u32], v: u32| xs.iter().position(|&x| x == v).unwrap_or(usize::MAX);
        match f {
            GenomeField::UnrollFactor => pos(&UNROLL_FACTORS, self.unroll_factor),
            GenomeField::TileSplit => pos(&TILE_SPLITS, self.tile_split),
            GenomeField::LaneWidthBits => pos(&LANE_WIDTHS, self.lane_width_bits),
            GenomeField::ElideCast => self.elide_cast as usize,
            GenomeField::Schedule => self.schedule as usize,
            GenomeField::HoistParams => self.hoist_params as usize,
        }
    }

    fn with_field_index(mut self, f: GenomeField, idx: usize) -> Self {
        match f {
            GenomeField::UnrollFactor => self.unroll_factor = UNROLL_FACTORS[idx],
            GenomeField::TileSplit => self.tile_split = TILE_SPLITS[idx],
            GenomeField::LaneWidthBits => self.lane_width_bits = LANE_WIDTHS[idx],
            GenomeField::ElideCast => self.elide_cast = idx == 1,
            GenomeField::Schedule => self.schedule = SCHEDULES[idx],
            GenomeField::HoistParams => self.hoist_params = idx == 1,
        }
        self
    }
}

fn domain_size(f: GenomeField) -> usize {
    match f {
        GenomeField::UnrollFactor => UNROLL_FACTORS.len(),
        GenomeField::TileSplit => TILE_SPLITS.len(),
        GenomeField::LaneWidthBits => LANE_WIDTHS.len(),
        GenomeField::ElideCast | GenomeField::Schedule | GenomeField::HoistParams => 2,
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "u{}/t{}/w{}{}{}{}",
            self.unroll_factor,
            self.tile_split,
            self.lane_width_bits,
            if self.elide_cast { "/elide" } else { "" },
            match self.schedule {
                Schedule::Serial => "",
                Schedule::Interleaved => "/interleaved",
            },
            if self.hoist_params { "/hoist" } else { "" },
        )
    }
}

/// Change exactly one field, chosen uniformly, to a different legal value
/// chosen uniformly.
pub fn mutate(g: &Genome, seed: u64) -> Genome {
    let mut rng = rng::seeded(seed);
    let field = GenomeField::ALL[rng.random_range(0..GenomeField::ALL.len())];
    let size = domain_size(field);
    let current = g.field_index(field);
    let mut pick = rng.random_range(0..size - 1);
    if pick >= current {
        pick += 1;
    }
    g.with_field_index(field, pick)
}

/// Uniform per-field recombination.
pub fn crossover(g1: &Genome, g2: &Genome, seed: u64) -> Genome {
    let mut rng = rng::seeded(seed);
    let mut child = *g1;
    for f in GenomeField::ALL {
        if rng.random_bool(0.5) {
            child = child.with_field_index(f, g2.field_index(f));
        }
    }
    child
}

type GenomePredicate = Arc<dyn Fn(&Genome) -> bool + Send + Sync>;

/// Per-field value restrictions plus optional joint exclusions.
#[derive(Clone, Default)]
pub struct SpaceConstraints {
    pub unroll_factors: Option<Vec<u32>>,
    pub tile_splits: Option<Vec<u32>>,
    pub lane_widths: Option<Vec<u32>>,
    pub elide_cast: Option<Vec<bool>>,
    pub schedules: Option<Vec<Schedule>>,
    pub hoist_params: Option<Vec<bool>>,
    excludes: Vec<GenomePredicate>,
}

impl fmt::Debug for SpaceConstraints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceConstraints")
            .field("unroll_factors", &self.unroll_factors)
            .field("tile_splits", &self.tile_splits)
            .field("lane_widths", &self.lane_widths)
            .field("elide_cast", &self.elide_cast)
            .field("schedules", &self.schedules)
            .field("hoist_params", &self.hoist_params)
            .field("excludes", &self.excludes.len())
            .finish()
    }
}

impl SpaceConstraints {
    pub fn exclude(mut self, pred: impl Fn(&Genome) -> bool + Send + Sync + 'static) -> Self {
        self.excludes.push(Arc::new(pred));
        self
    }

    fn admits(&self, g: &Genome) -> bool {
        fn ok<T: PartialEq>(set: &Option<Vec<T>>, v: &T) -> bool {
            set.as_ref().is_none_or(|s| s.contains(v))
        }
        ok(&self.unroll_factors, &g.unroll_factor)
            && ok(&self.tile_splits, &g.tile_split)
            && ok(&self.lane_widths, &g.lane_width_bits)
            && ok(&self.elide_cast, &g.elide_cast)
            && ok(&self.schedules, &g.schedule)
            && ok(&self.hoist_params, &g.hoist_params)
            && !self.excludes.iter().any(|p| p(g))
    }
}

/// Every genome admitted by `constraints` whose tile split divides
/// `tiled_dim`, in a fixed nested order (unroll outermost, hoist innermost).
pub fn enumerate_space(tiled_dim: usize, constraints: &SpaceConstraints) -> Vec<Genome> {
    let mut out = Vec::new();
    for &unroll_factor in &UNROLL_FACTORS {
        for &tile_split in &TILE_SPLITS {
            if !tiled_dim.is_multiple_of(tile_split as usize) {
                continue;
            }
            for &lane_width_bits in &LANE_WIDTHS {
                for elide_cast in [false, true] {
                    for schedule in SCHEDULES {
                        for hoist_params in [false, true] {
                            let g = Genome {
                                unroll_factor,
                                tile_split,
                                lane_width_bits,
                                elide_cast,
                                schedule,
                                hoist_params,
                            };
                            if constraints.admits(&g) {
                                out.push(g);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// The unconstrained 288-point space for a dimension divisible by 4.
pub fn default_space() -> Vec<Genome> {
    enumerate_space(64, &SpaceConstraints::default())
}
