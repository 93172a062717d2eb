//! Empirical check of the top-k ranking budgets: build games with a known Banzhaf gap
//! at rank k, estimate at the prescribed budgets and count misranked top-k sets.

use cfbanzhaf_core::game::{TabulatedGame, ThresholdPolicy};
use cfbanzhaf_core::semivalues::{
    banzhaf_mc, banzhaf_msr, exact_banzhaf, required_samples_mc, required_samples_msr, top_k, SamplePolicy,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Per-player value ranges and noise amplitude used to build the games.
const HIGH_LO: f64 = 0.04;
const HIGH_HI: f64 = 0.08;
const LOW_HI: f64 = 0.01;
const NOISE: f64 = 0.01;
const MAX_ATTEMPTS: usize = 1000;

/// A game on `n` players with values in `[0, 1]` whose exact Banzhaf values have a gap
/// larger than `epsilon` between ranks `k` and `k + 1`: an additive game with `k`
/// strong players, plus bounded coalition-level noise. The gap is verified exactly.
pub fn constructed_game<R: Rng + ?Sized>(n: usize, k: usize, epsilon: f64, rng: &mut R) -> Result<(TabulatedGame, Vec<usize>)> {
    if k == 0 || k >= n {
        return Err(HarnessError::Config(format!("need 1 <= k < n (k = {k}, n = {n})")));
    }
    let ceiling = k as f64 * (epsilon + HIGH_HI) + (n - k) as f64 * LOW_HI + NOISE;
    if ceiling > 1.0 {
        return Err(HarnessError::Config(format!(
            "cannot fit a gap of {epsilon} at rank {k} among {n} players into [0, 1]"
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut weights: Vec<f64> = (0..n)
            .map(|i| if i < k { epsilon + rng.gen_range(HIGH_LO..HIGH_HI) } else { rng.gen_range(0.0..LOW_HI) })
            .collect();
        rand::seq::SliceRandom::shuffle(weights.as_mut_slice(), rng);
        let values: Vec<f64> = (0..1u64 << n)
            .map(|mask| {
                let additive: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
                additive + if mask == 0 { 0.0 } else { rng.gen_range(0.0..NOISE) }
            })
            .collect();
        let game = TabulatedGame::new(n, values)?;
        let exact = exact_banzhaf(&game, &ThresholdPolicy::NONE)?.values;
        let order = top_k(&exact, n)?;
        if exact[order[k - 1]] - exact[order[k]] > epsilon {
            let mut top = order[..k].to_vec();
            top.sort_unstable();
            return Ok((game, top));
        }
    }
    Err(HarnessError::Config("no game with the requested gap found".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub estimator: String,
    /// Utility calls prescribed by the bound.
    pub budget_calls: u64,
    /// Coalitions per player (MC) or in total (MSR).
    pub samples: usize,
    /// Calls actually made per estimate.
    pub calls_per_estimate: usize,
    /// Player estimates each call contributes to.
    pub estimates_per_call: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub seed: u64,
}

struct Trial {
    mc_failed: bool,
    msr_failed: bool,
    mc_calls: usize,
    msr_calls: usize,
}

fn top_set(values: &[f64], k: usize) -> Result<Vec<usize>> {
    let mut t = top_k(values, k)?;
    t.sort_unstable();
    Ok(t)
}

fn run_trial(n: usize, k: usize, epsilon: f64, mc_samples: usize, msr_samples: usize, seed: u64) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (game, truth) = constructed_game(n, k, epsilon, &mut rng)?;
    let mc = banzhaf_mc(&game, &ThresholdPolicy::NONE, &SamplePolicy::uniform(mc_samples, rng.next_u64()))?;
    let msr = banzhaf_msr(&game, &ThresholdPolicy::NONE, &SamplePolicy::uniform(msr_samples, rng.next_u64()))?;
    Ok(Trial {
        mc_failed: top_set(&mc.values, k)? != truth,
        msr_failed: top_set(&msr.values, k)? != truth,
        mc_calls: mc.utility_calls,
        msr_calls: msr.utility_calls,
    })
}

/// Two rows per `n`: subset-sampling MC at `floor(budget / 2n)` coalitions per player
/// (two calls per marginal) and MSR at its bound's sample count.
pub fn run_sample_complexity_study(
    n_values: &[usize],
    k: usize,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ComplexityRow>> {
    if trials == 0 {
        return Err(HarnessError::Config("trials must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for &n in n_values {
        if n > 16 {
            return Err(HarnessError::Config(format!("exact verification needs n <= 16 (got {n})")));
        }
        let mc_budget = required_samples_mc(n, epsilon, delta)?;
        let msr_budget = required_samples_msr(n, epsilon, delta)?;
        let mc_samples = ((mc_budget / (2 * n as u64)) as usize).max(1);
        let msr_samples = msr_budget as usize;

        let mut trial_seeds = ChaCha8Rng::seed_from_u64(seed);
        trial_seeds.set_stream(n as u64);
        let seeds: Vec<u64> = (0..trials).map(|_| trial_seeds.next_u64()).collect();
        let results = seeds
            .par_iter()
            .map(|&s| run_trial(n, k, epsilon, mc_samples, msr_samples, s))
            .collect::<Result<Vec<_>>>()?;

        let mc_failures = results.iter().filter(|t| t.mc_failed).count();
        let msr_failures = results.iter().filter(|t| t.msr_failed).count();
        let row = |estimator: &str, budget_calls, samples, calls, per_call, failures: usize| ComplexityRow {
            n,
            k,
            epsilon,
            delta,
            estimator: estimator.into(),
            budget_calls,
            samples,
            calls_per_estimate: calls,
            estimates_per_call: per_call,
            trials,
            failures,
            failure_rate: failures as f64 / trials as f64,
            seed,
        };
        rows.push(row("banzhaf-mc", mc_budget, mc_samples, results[0].mc_calls, 1, mc_failures));
        rows.push(row("banzhaf-msr", msr_budget, msr_samples, results[0].msr_calls, n, msr_failures));
        log::info!(
            "n={n}: MC {mc_failures}/{trials} failures at {} calls, MSR {msr_failures}/{trials} at {} calls",
            results[0].mc_calls,
            results[0].msr_calls
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_games_have_the_gap_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let (game, top) = constructed_game(8, 3, 0.2, &mut rng).unwrap();
            assert!(game.values().iter().all(|&u| (0.0..=1.0).contains(&u)));
            let exact = exact_banzhaf(&game, &ThresholdPolicy::NONE).unwrap().values;
            let weakest_top = top.iter().map(|&i| exact[i]).fold(f64::INFINITY, f64::min);
            let strongest_rest = (0..8).filter(|i| !top.contains(i)).map(|i| exact[i]).fold(0.0, f64::max);
            assert!(weakest_top - strongest_rest > 0.2);
        }
    }

    #[test]
    fn impossible_gaps_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(constructed_game(8, 3, 0.4, &mut rng).is_err());
        assert!(constructed_game(8, 8, 0.1, &mut rng).is_err());
    }

    #[test]
    fn small_study_reports_both_estimators() {
        let rows = run_sample_complexity_study(&[6], 2, 0.2, 0.1, 4, 1).unwrap();
        assert_eq!(rows.len(), 2);
        let mc = &rows[0];
        assert_eq!(mc.calls_per_estimate, 2 * 6 * mc.samples);
        assert!(mc.calls_per_estimate as u64 <= mc.budget_calls);
        assert_eq!(rows[1].calls_per_estimate as u64, rows[1].budget_calls);
        assert_eq!(rows, run_sample_complexity_study(&[6], 2, 0.2, 0.1, 4, 1).unwrap());
    }
}
