#![allow(dead_code)]

use cfbanzhaf_core::game::TabulatedGame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Utilities uniform in [0, 1) with U(∅) = 0.
pub fn random_game(n: usize, seed: u64) -> TabulatedGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..1u64 << n).map(|m| if m == 0 { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    TabulatedGame::new(n, values).unwrap()
}

pub fn additive(a: &[f64]) -> TabulatedGame {
    let a = a.to_vec();
    TabulatedGame::from_fn(a.len(), |m| (0..a.len()).filter(|i| m >> i & 1 == 1).map(|i| a[i]).sum()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
