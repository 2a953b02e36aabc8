//! Seeded randomness shared by key generation, encryption and the search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

pub type SeededRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; mixes a parent seed with a stream index so that
/// sibling streams are independent.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive from a path of stream indices.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &p| derive_seed(s, p))
}

/// Rounded centered Gaussian; `std == 0` yields exact zeros.
pub fn gaussian(rng: &mut impl Rng, std: f64) -> i64 {
    if std <= 0.0 {
        return 0;
    }
    let normal = Normal::new(0.0, std).expect("finite positive std");
    normal.sample(rng).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_and_repeat() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
        assert_eq!(derive_path(5, &[1, 2]), derive_seed(derive_seed(5, 1), 2));
    }

    #[test]
    fn zero_std_is_exact() {
        let mut rng = seeded(0);
        assert!((0..100).all(|_| gaussian(&mut rng, 0.0) == 0));
    }

    #[test]
    fn gaussian_spread_is_plausible() {
        let mut rng = seeded(9);
        let samples: Vec<i64> = (0..20_000).map(|_| gaussian(&mut rng, 10.0)).collect();
        let mean = samples.iter().sum::<i64>() as f64 / samples.len() as f64;
        let var = samples
            .iter()
            .map(|&s| (s as f64 - mean).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        assert!(mean.abs() < 0.5, "mean {mean}");
        assert!((var.sqrt() - 10.0).abs() < 0.5, "std {}", var.sqrt());
    }
}
