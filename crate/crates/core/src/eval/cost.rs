//! Deterministic latency model of a vector machine with `(8, 128)`
//! registers: parameter reloads, a two-stage memory/compute pipeline over
//! column tiles, explicit width conversions and layout reshapes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::variants::KernelDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelConfig {
    pub vreg_rows: usize,
    pub vreg_cols: usize,
    pub word_bits: u32,
    pub param_load_cost: f64,
    pub mem_block_cost: f64,
    pub compute_block_cost: f64,
    pub cast_cost_per_elem: f64,
    pub reorg_penalty: f64,
    /// Converts modeled cycles to microseconds.
    pub clock_ghz: f64,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        Self {
            vreg_rows: 8,
            vreg_cols: 128,
            word_bits: 32,
            param_load_cost: 100.0,
            mem_block_cost: 100.0,
            compute_block_cost: 100.0,
            cast_cost_per_elem: 1.0,
            reorg_penalty: 64.0,
            clock_ghz: 1.5,
        }
    }
}

impl CostModelConfig {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if (self.vreg_rows, self.vreg_cols) != (8, 128) {
            out.push(format!(
                "vreg shape must be (8, 128), found ({}, {})",
                self.vreg_rows, self.vreg_cols
            ));
        }
        if self.word_bits == 0 {
            out.push("word_bits must be positive".into());
        }
        for (name, v) in [
            ("param_load_cost", self.param_load_cost),
            ("mem_block_cost", self.mem_block_cost),
            ("compute_block_cost", self.compute_block_cost),
            ("cast_cost_per_elem", self.cast_cost_per_elem),
            ("reorg_penalty", self.reorg_penalty),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push(format!("{name} must be finite and non-negative"));
            }
        }
        if !self.clock_ghz.is_finite() || self.clock_ghz <= 0.0 {
            out.push("clock_ghz must be positive".into());
        }
        out
    }

    pub fn cycles_to_us(&self, cycles: f64) -> f64 {
        cycles / (self.clock_ghz * 1000.0)
    }
}

/// Cost terms in cycles; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub param_loads: f64,
    pub tile_pipeline: f64,
    pub cast: f64,
    pub reorg: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.param_loads + self.tile_pipeline + self.cast + self.reorg
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        [
            ("param_loads", self.param_loads),
            ("tile_pipeline", self.tile_pipeline),
            ("cast", self.cast),
            ("reorg", self.reorg),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Two-stage pipeline over `t` equal blocks: the first load and the last
/// compute are exposed, everything in between overlaps.
pub fn pipelined(mem_total: f64, compute_total: f64, t: u32) -> f64 {
    let t = t.max(1) as f64;
    let mem = mem_total / t;
    let compute = compute_total / t;
    mem + (t - 1.0) * mem.max(compute) + compute
}

pub fn cost_breakdown(desc: &KernelDescriptor, cfg: &CostModelConfig) -> CostBreakdown {
    let g = &desc.genome;
    let rows = desc.shape.rows;
    let cols = desc.shape.cols;
    let trip = desc.trip_count as f64;
    let vregs = (rows.div_ceil(cfg.vreg_rows) * cols.div_ceil(cfg.vreg_cols)) as f64;
    // Narrow lanes pack more values per register; operands wider than the
    // lane are processed in several chunks unless the cast is elided.
    let chunks = if g.elide_cast {
        1.0
    } else {
        desc.operand_bits.div_ceil(g.lane_width_bits) as f64
    };
    let width = g.lane_width_bits as f64 / cfg.word_bits as f64;
    let mem_total = cfg.mem_block_cost * vregs * chunks * width;
    let compute_total = cfg.compute_block_cost * vregs * chunks;

    let param_loads =
        desc.trip_count.div_ceil(g.unroll_factor as usize) as f64 * cfg.param_load_cost;
    let tile_pipeline = trip * pipelined(mem_total, compute_total, g.tile_split);
    let cast = if g.elide_cast {
        0.0
    } else {
        trip * (rows * cols) as f64 * cfg.cast_cost_per_elem
    };
    let aligned = rows.is_multiple_of(cfg.vreg_rows) && cols.is_multiple_of(cfg.vreg_cols);
    let reorg = if aligned {
        0.0
    } else {
        trip * cfg.reorg_penalty
    };
    CostBreakdown {
        param_loads,
        tile_pipeline,
        cast,
        reorg,
    }
}

pub fn cost_model_latency(desc: &KernelDescriptor, cfg: &CostModelConfig) -> f64 {
    cost_breakdown(desc, cfg).total()
}

/// Active elements over the capacity of the registers the tiles touch.
pub fn vreg_utilization(desc: &KernelDescriptor, cfg: &CostModelConfig) -> f64 {
    let t = desc.genome.tile_split as usize;
    let rows = desc.shape.rows;
    let cols = desc.shape.cols;
    let tile_cols = cols / t;
    let touched = t * rows.div_ceil(cfg.vreg_rows) * tile_cols.div_ceil(cfg.vreg_cols);
    (rows * cols) as f64 / (touched * cfg.vreg_rows * cfg.vreg_cols) as f64
}
