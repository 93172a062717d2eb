//! Full enumeration over all coalitions.

use alloc::vec;
use alloc::vec::Vec;

use super::{Method, SemivalueResult, WeightFunction, WeightKind};
use crate::error::{Error, Result};
use crate::game::{Coalition, Game, ThresholdPolicy, Thresholded};

/// Largest game that exact enumeration will accept.
pub const EXACT_PLAYER_LIMIT: usize = 20;

pub fn exact_semivalue<G: Game + ?Sized>(
    game: &G,
    weights: &WeightFunction,
    policy: &ThresholdPolicy,
) -> Result<SemivalueResult> {
    let n = game.player_count();
    if n > EXACT_PLAYER_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: EXACT_PLAYER_LIMIT });
    }
    if weights.n() != n {
        return Err(Error::Dimension(alloc::format!(
            "weights for {} players, game has {n}",
            weights.n()
        )));
    }
    policy.validate()?;

    let reference = game.reference_value();
    let mut pruned = 0;
    let table: Vec<f64> = (0..1u64 << n)
        .map(|mask| match policy.apply(game.value(&Coalition::from_mask(n, mask)), reference) {
            Thresholded::Value(v) => v,
            Thresholded::Pruned => {
                pruned += 1;
                0.0
            }
        })
        .collect();

    // weight of a marginal contribution to a coalition of size s, including the 1/n factor
    let by_size: Vec<f64> = (0..n).map(|s| weights.w(s + 1) / n as f64).collect();
    let mut values = vec![0.0; n];
    for mask in 0..1u64 << n {
        let size = mask.count_ones() as usize;
        if size == n {
            continue;
        }
        let base = table[mask as usize];
        let wt = by_size[size];
        for (i, value) in values.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *value += wt * (table[(mask | 1 << i) as usize] - base);
            }
        }
    }

    let method = match weights.kind() {
        WeightKind::Shapley => Method::ExactShapley,
        WeightKind::Banzhaf => Method::ExactBanzhaf,
        WeightKind::Custom => Method::ExactSemivalue,
    };
    Ok(SemivalueResult {
        values,
        method,
        samples_used: table.len(),
        utility_calls: table.len(),
        pruned_count: pruned,
    })
}

pub fn exact_shapley<G: Game + ?Sized>(game: &G, policy: &ThresholdPolicy) -> Result<SemivalueResult> {
    exact_semivalue(game, &WeightFunction::shapley(game.player_count())?, policy)
}

pub fn exact_banzhaf<G: Game + ?Sized>(game: &G, policy: &ThresholdPolicy) -> Result<SemivalueResult> {
    exact_semivalue(game, &WeightFunction::banzhaf(game.player_count())?, policy)
}
