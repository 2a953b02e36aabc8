use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eval::EvaluationReport;
use crate::rng::seeded;
use crate::variants::Genome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Low,
    Mid,
    High,
}

/// MAP-Elites coordinates: (complexity, footprint).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub complexity: Bucket,
    pub footprint: Bucket,
}

/// Complexity is `unroll * tile_split` (<=2, <=8, above); footprint is
/// `lane_width_bits * tile_split` (<32, 32..=64, above).
pub fn map_elites_bin(g: &Genome) -> Cell {
    let complexity = match g.unroll_factor * g.tile_split {
        0..=2 => Bucket::Low,
        3..=8 => Bucket::Mid,
        _ => Bucket::High,
    };
    let footprint = match g.lane_width_bits * g.tile_split {
        0..=31 => Bucket::Low,
        32..=64 => Bucket::Mid,
        _ => Bucket::High,
    };
    Cell {
        complexity,
        footprint,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Elite {
    pub genome: Genome,
    pub report: EvaluationReport,
}

impl Elite {
    pub fn score(&self) -> f64 {
        self.report.score.expect("elites are scored")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Island {
    pub cells: BTreeMap<Cell, Elite>,
}

impl Island {
    pub fn best(&self) -> Option<&Elite> {
        self.cells
            .values()
            .fold(None, |best: Option<&Elite>, e| match best {
                Some(b) if b.score() >= e.score() => Some(b),
                _ => Some(e),
            })
    }

    /// Elites by descending score; ties keep cell order.
    pub fn ranked(&self) -> Vec<&Elite> {
        let mut v: Vec<&Elite> = self.cells.values().collect();
        v.sort_by(|a, b| b.score().total_cmp(&a.score()));
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationDb {
    pub islands: Vec<Island>,
}

/// Probability of drawing a parent uniformly instead of by fitness.
pub const UNIFORM_FLOOR: f64 = 0.2;

impl PopulationDb {
    pub fn new(islands: usize) -> Self {
        Self {
            islands: vec![Island::default(); islands],
        }
    }

    /// Store the candidate if it passed every gate and its cell is empty or
    /// held by a strictly worse elite.
    pub fn admit(&mut self, island: usize, genome: Genome, report: &EvaluationReport) -> bool {
        let Some(score) = report.score else {
            return false;
        };
        if report.gates.iter().any(|g| !g.passed) {
            return false;
        }
        let cell = map_elites_bin(&genome);
        let cells = &mut self.islands[island].cells;
        if cells.get(&cell).is_some_and(|e| score <= e.score()) {
            return false;
        }
        cells.insert(
            cell,
            Elite {
                genome,
                report: report.clone(),
            },
        );
        true
    }

    pub fn best(&self) -> Option<&Elite> {
        self.islands.iter().filter_map(Island::best).fold(
            None,
            |best: Option<&Elite>, e| match best {
                Some(b) if b.score() >= e.score() => Some(b),
                _ => Some(e),
            },
        )
    }

    /// Every island sends its best elite to the next one around the ring;
    /// arrivals go through the normal admission rule. Returns admissions.
    pub fn migrate(&mut self) -> usize {
        let k = self.islands.len();
        if k < 2 {
            return 0;
        }
        let travellers: Vec<Option<Elite>> =
            self.islands.iter().map(|i| i.best().cloned()).collect();
        let mut admitted = 0;
        for (i, e) in travellers.into_iter().enumerate() {
            if let Some(e) = e {
                admitted += self.admit((i + 1) % k, e.genome, &e.report) as usize;
            }
        }
        admitted
    }

    /// Draw `count` parents from the top `pool` elites of an island: with
    /// probability [`UNIFORM_FLOOR`] uniformly, otherwise proportional to
    /// `1 / latency`. An empty island yields `fallback`.
    pub fn sample_parents(
        &self,
        island: usize,
        count: usize,
        pool: usize,
        seed: u64,
        fallback: Genome,
    ) -> Vec<Genome> {
        let ranked = self.islands[island].ranked();
        let pool = &ranked[..ranked.len().min(pool.max(1))];
        if pool.is_empty() {
            return vec![fallback; count];
        }
        let mut rng = seeded(seed);
        let weights: Vec<f64> = pool
            .iter()
            .map(|e| 1.0 / (-e.score()).max(f64::MIN_POSITIVE))
            .collect();
        let dist = WeightedIndex::new(&weights).ok();
        (0..count)
            .map(|_| {
                let idx = match &dist {
                    Some(d) if !rng.random_bool(UNIFORM_FLOOR) => d.sample(&mut rng),
                    _ => rng.random_range(0..pool.len()),
                };
                pool[idx].genome
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.islands.iter().map(|i| i.cells.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elites(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.islands
            .iter()
            .enumerate()
            .flat_map(|(i, isl)| isl.cells.values().map(move |e| (i, e)))
    }
}
