//! Sampling estimators: permutation Shapley, subset Monte Carlo Banzhaf and
//! maximum-sample-reuse (MSR) Banzhaf.
//!
//! Every estimator consumes its random stream sequentially, so a run with `m` samples
//! sees exactly the first `m` samples of a run with more.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Method, SemivalueResult};
use crate::error::{Error, Result};
use crate::game::{Coalition, Game, ThresholdPolicy, Thresholded};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeMode {
    /// Every player joins independently with probability 1/2.
    Uniform,
    /// Exactly `s` players, uniformly (clamped to the available pool). Biased for MSR.
    FixedSize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePolicy {
    pub count: usize,
    pub size: SizeMode,
    pub seed: u64,
}

impl SamplePolicy {
    pub fn uniform(count: usize, seed: u64) -> Self {
        Self { count, size: SizeMode::Uniform, seed }
    }

    pub fn fixed_size(count: usize, size: usize, seed: u64) -> Self {
        Self { count, size: SizeMode::FixedSize(size), seed }
    }

    pub fn validate(&self, players: usize) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        if let SizeMode::FixedSize(s) = self.size {
            if s > players {
                return Err(Error::InvalidArgument(alloc::format!(
                    "coalition size {s} exceeds the {players} players"
                )));
            }
        }
        Ok(())
    }
}

/// Seeded stream of random coalitions over `n` players.
pub struct CoalitionSampler {
    n: usize,
    size: SizeMode,
    rng: ChaCha8Rng,
}

impl CoalitionSampler {
    pub fn new(n: usize, size: SizeMode, seed: u64) -> Self {
        Self { n, size, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self) -> Coalition {
        self.draw(None)
    }

    /// A coalition of the other `n − 1` players.
    pub fn sample_without(&mut self, excluded: usize) -> Coalition {
        self.draw(Some(excluded))
    }

    fn draw(&mut self, excluded: Option<usize>) -> Coalition {
        let n = self.n;
        match self.size {
            SizeMode::Uniform => {
                let mut c = Coalition::empty(n);
                let mut i = 0;
                while i < n {
                    let bits = self.rng.next_u64();
                    for b in 0..64.min(n - i) {
                        if bits >> b & 1 == 1 {
                            c.insert(i + b);
                        }
                    }
                    i += 64;
                }
                if let Some(x) = excluded {
                    c.remove(x);
                }
                c
            }
            SizeMode::FixedSize(s) if n <= 64 => {
                let pool = n - usize::from(excluded.is_some());
                let mut mask = 0u64;
                for j in (pool - s.min(pool)) as u32..pool as u32 {
                    let t = below(&mut self.rng, j + 1);
                    mask |= if mask >> t & 1 == 1 { 1 << j } else { 1 << t };
                }
                if let Some(x) = excluded {
                    // open a gap at x
                    let below = mask & ((1u64 << x) - 1);
                    mask = below | (mask & !((1u64 << x) - 1)) << 1;
                }
                Coalition::from_mask(n, mask)
            }
            SizeMode::FixedSize(s) => {
                // Floyd's algorithm over the pool, then skip past the excluded player
                let pool = n - usize::from(excluded.is_some());
                let shift = |p: usize| match excluded {
                    Some(x) if p >= x => p + 1,
                    _ => p,
                };
                let mut picked = Coalition::empty(n);
                for j in pool - s.min(pool)..pool {
                    let t = below(&mut self.rng, j as u32 + 1) as usize;
                    let t = if picked.contains(shift(t)) { j } else { t };
                    picked.insert(shift(t));
                }
                picked
            }
        }
    }
}

/// Uniform draw from `0..range` by multiply-and-reject; unlike `gen_range` it divides
/// only on the rare rejection path, which matters at one draw per coalition member.
fn below(rng: &mut ChaCha8Rng, range: u32) -> u32 {
    let mut m = u64::from(rng.next_u32()) * u64::from(range);
    if (m as u32) < range {
        let threshold = range.wrapping_neg() % range;
        while (m as u32) < threshold {
            m = u64::from(rng.next_u32()) * u64::from(range);
        }
    }
    (m >> 32) as u32
}

struct Evaluator<'g, G: ?Sized> {
    game: &'g G,
    policy: ThresholdPolicy,
    reference: f64,
    calls: usize,
    pruned: usize,
}

impl<'g, G: Game + ?Sized> Evaluator<'g, G> {
    fn new(game: &'g G, policy: &ThresholdPolicy) -> Result<Self> {
        policy.validate()?;
        if game.player_count() == 0 {
            return Err(Error::InvalidArgument("game has no players".into()));
        }
        Ok(Self { game, policy: *policy, reference: game.reference_value(), calls: 0, pruned: 0 })
    }

    fn raw(&mut self, c: &Coalition) -> f64 {
        self.calls += 1;
        self.game.value(c)
    }

    fn threshold(&mut self, u: f64) -> f64 {
        match self.policy.apply(u, self.reference) {
            Thresholded::Value(v) => v,
            Thresholded::Pruned => {
                self.pruned += 1;
                0.0
            }
        }
    }

    fn eval(&mut self, c: &Coalition) -> f64 {
        let u = self.raw(c);
        self.threshold(u)
    }
}

/// Shapley values from `permutations` random orderings.
pub fn shapley_perm_mc<G: Game + ?Sized, R: Rng + ?Sized>(
    game: &G,
    permutations: usize,
    policy: &ThresholdPolicy,
    rng: &mut R,
) -> Result<SemivalueResult> {
    if permutations == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let mut ev = Evaluator::new(game, policy)?;
    let n = game.player_count();
    let empty = ev.eval(&Coalition::empty(n));
    let mut sums = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        order.shuffle(rng);
        let mut c = Coalition::empty(n);
        let mut prev = empty;
        for &i in &order {
            c.insert(i);
            let cur = ev.eval(&c);
            sums[i] += cur - prev;
            prev = cur;
        }
    }
    let values = sums.iter().map(|s| s / permutations as f64).collect();
    Ok(SemivalueResult {
        values,
        method: Method::ShapleyPermMc,
        samples_used: permutations,
        utility_calls: ev.calls,
        pruned_count: ev.pruned,
    })
}

/// Banzhaf values by averaging `U(S ∪ i) − U(S)` over `sample.count` coalitions per player.
pub fn banzhaf_mc<G: Game + ?Sized>(
    game: &G,
    policy: &ThresholdPolicy,
    sample: &SamplePolicy,
) -> Result<SemivalueResult> {
    let mut ev = Evaluator::new(game, policy)?;
    let n = game.player_count();
    sample.validate(n)?;
    let mut sampler = CoalitionSampler::new(n, sample.size, sample.seed);
    let mut sums = vec![0.0; n];
    for _ in 0..sample.count {
        for (i, sum) in sums.iter_mut().enumerate() {
            let without = sampler.sample_without(i);
            let with = without.with(i);
            *sum += ev.eval(&with) - ev.eval(&without);
        }
    }
    let values = sums.iter().map(|s| s / sample.count as f64).collect();
    Ok(SemivalueResult {
        values,
        method: Method::BanzhafMc,
        samples_used: sample.count,
        utility_calls: ev.calls,
        pruned_count: ev.pruned,
    })
}

/// Side sums for the MSR estimator. The "out" side is derived from running totals,
/// so each sample costs `O(|S|)`.
struct MsrAccumulator {
    in_sum: Vec<f64>,
    in_count: Vec<usize>,
    total: f64,
    count: usize,
}

impl MsrAccumulator {
    fn new(n: usize) -> Self {
        Self { in_sum: vec![0.0; n], in_count: vec![0; n], total: 0.0, count: 0 }
    }

    fn add(&mut self, c: &Coalition, u: f64) {
        self.total += u;
        self.count += 1;
        for i in c.members() {
            self.in_sum[i] += u;
            self.in_count[i] += 1;
        }
    }

    fn finish(&self) -> Vec<f64> {
        (0..self.in_sum.len())
            .map(|i| {
                let k_in = self.in_count[i];
                let k_out = self.count - k_in;
                if k_in == 0 || k_out == 0 {
                    return 0.0;
                }
                self.in_sum[i] / k_in as f64 - (self.total - self.in_sum[i]) / k_out as f64
            })
            .collect()
    }
}

/// MSR estimates from already-evaluated samples.
pub fn msr_from_samples(n: usize, samples: &[(Coalition, f64)]) -> Vec<f64> {
    let mut acc = MsrAccumulator::new(n);
    for (c, u) in samples {
        acc.add(c, *u);
    }
    acc.finish()
}

/// Banzhaf values by maximum sample reuse: every sampled coalition feeds every player.
///
/// Under a prune-ratio threshold with `b > 0`, the first tenth of the samples is a
/// warm-up that is always evaluated. Afterwards a coalition is skipped (treated as
/// pruned, not evaluated) when, for every member, the warm-up coalitions containing it
/// had a mean ratio below `b`. Raising `b` can only skip more.
pub fn banzhaf_msr<G: Game + ?Sized>(
    game: &G,
    policy: &ThresholdPolicy,
    sample: &SamplePolicy,
) -> Result<SemivalueResult> {
    let mut ev = Evaluator::new(game, policy)?;
    let n = game.player_count();
    sample.validate(n)?;
    let mut sampler = CoalitionSampler::new(n, sample.size, sample.seed);
    let mut acc = MsrAccumulator::new(n);

    let skipping = policy.prunes() && policy.b > 0.0;
    let warm_up = if skipping { sample.count.div_ceil(10) } else { sample.count };
    // mean warm-up ratio of the coalitions containing each player
    let mut ratio_sum = vec![0.0; n];
    let mut ratio_count = vec![0usize; n];
    // players whose warm-up mean ratio fell below b; unseen players never qualify
    let mut low = Coalition::empty(n);

    for t in 0..sample.count {
        let c = sampler.sample();
        if t == warm_up {
            for i in 0..n {
                if ratio_count[i] > 0 && ratio_sum[i] / (ratio_count[i] as f64) < policy.b {
                    low.insert(i);
                }
            }
        }
        let u = if t >= warm_up && c.is_subset(&low) {
            ev.pruned += 1;
            0.0
        } else {
            let raw = ev.raw(&c);
            if t < warm_up && skipping {
                let ratio = raw / ev.reference;
                for i in c.members() {
                    ratio_sum[i] += ratio;
                    ratio_count[i] += 1;
                }
            }
            ev.threshold(raw)
        };
        acc.add(&c, u);
    }
    Ok(SemivalueResult {
        values: acc.finish(),
        method: Method::BanzhafMsr,
        samples_used: sample.count,
        utility_calls: ev.calls,
        pruned_count: ev.pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TabulatedGame;

    fn additive(a: &[f64]) -> TabulatedGame {
        let a = a.to_vec();
        TabulatedGame::from_fn(a.len(), |m| (0..a.len()).filter(|i| m >> i & 1 == 1).map(|i| a[i]).sum())
            .unwrap()
    }

    #[test]
    fn bounded_draws_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[below(&mut rng, 7) as usize] += 1;
        }
        // each bucket ~ Binomial(70000, 1/7): sd ≈ 93
        assert!(counts.iter().all(|&c| c.abs_diff(10_000) < 500), "{counts:?}");
        assert!((0..100).all(|_| below(&mut rng, 1) == 0));
        assert!((0..1000).all(|_| below(&mut rng, u32::MAX) < u32::MAX));
    }

    #[test]
    fn msr_hand_example() {
        let s = |m| Coalition::from_mask(2, m);
        let v = msr_from_samples(2, &[(s(0), 0.0), (s(1), 1.0), (s(2), 0.0), (s(3), 1.0)]);
        assert_eq!(v, vec![1.0, 0.0]);
        // player 0 is in every sample
        let v = msr_from_samples(2, &[(s(1), 1.0), (s(3), 1.0)]);
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn additive_games_have_zero_variance() {
        let a = [0.2, -0.05, 0.4, 0.1, 0.0];
        let g = additive(&a);
        let p = ThresholdPolicy::NONE;
        let sh = shapley_perm_mc(&g, 3, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mc = banzhaf_mc(&g, &p, &SamplePolicy::uniform(7, 2)).unwrap();
        for i in 0..a.len() {
            assert!((sh.values[i] - a[i]).abs() < 1e-12);
            assert!((mc.values[i] - a[i]).abs() < 1e-12);
        }
        assert_eq!(mc.utility_calls, 2 * 5 * 7);
        assert_eq!(sh.utility_calls, 1 + 3 * 5);
    }

    #[test]
    fn one_permutation_telescopes() {
        let g = TabulatedGame::from_fn(6, |m| ((m * 2654435761) % 97) as f64 / 97.0 * f64::from(m != 0)).unwrap();
        let r = shapley_perm_mc(&g, 1, &ThresholdPolicy::NONE, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let total: f64 = r.values.iter().sum();
        assert!((total - g.at(0b111111)).abs() < 1e-12);
    }

    #[test]
    fn samplers_respect_sizes_and_exclusions() {
        let mut s = CoalitionSampler::new(70, SizeMode::FixedSize(5), 3);
        for _ in 0..50 {
            let c = s.sample_without(64);
            assert_eq!(c.len(), 5);
            assert!(!c.contains(64));
        }
        let mut s = CoalitionSampler::new(70, SizeMode::Uniform, 3);
        let mut hits = 0;
        for _ in 0..2000 {
            let c = s.sample_without(2);
            assert!(!c.contains(2));
            assert!(c.members().all(|i| i < 70));
            hits += usize::from(c.contains(69));
        }
        assert!((900..1100).contains(&hits));
        let mut s = CoalitionSampler::new(4, SizeMode::FixedSize(4), 0);
        assert_eq!(s.sample_without(1).len(), 3);
    }

    #[test]
    fn streams_are_prefix_stable() {
        let mut a = CoalitionSampler::new(9, SizeMode::FixedSize(3), 11);
        let mut b = CoalitionSampler::new(9, SizeMode::FixedSize(3), 11);
        let first: Vec<_> = (0..10).map(|_| a.sample()).collect();
        let longer: Vec<_> = (0..25).map(|_| b.sample()).collect();
        assert_eq!(first[..], longer[..10]);
    }

    #[test]
    fn invalid_sample_policies() {
        let g = additive(&[0.1, 0.2]);
        let p = ThresholdPolicy::NONE;
        assert!(banzhaf_msr(&g, &p, &SamplePolicy::uniform(0, 0)).is_err());
        assert!(banzhaf_msr(&g, &p, &SamplePolicy::fixed_size(5, 3, 0)).is_err());
        assert!(shapley_perm_mc(&g, 0, &p, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn msr_skips_flat_games_after_warm_up() {
        // every utility below 0.05 of the reference: only warm-up samples are evaluated
        let g = TabulatedGame::from_fn(6, |m| 0.01 * m.count_ones() as f64 / 6.0).unwrap();
        let sample = SamplePolicy::uniform(1000, 4);
        let r = banzhaf_msr(&g, &ThresholdPolicy::prune_ratio(0.05), &sample).unwrap();
        assert_eq!(r.utility_calls, 100);
        assert_eq!(r.pruned_count, 1000);
        assert!(r.values.iter().all(|&v| v == 0.0));
        let r0 = banzhaf_msr(&g, &ThresholdPolicy::prune_ratio(0.0), &sample).unwrap();
        assert_eq!(r0.utility_calls, 1000);
    }
}
