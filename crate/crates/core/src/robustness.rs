//! How much utility noise a semivalue ranking tolerates.
//!
//! For players `i, j` the scaled difference `D = n(φ_i − φ_j)` is linear in the utility
//! table: `D = aᵀU` with `a[S∪i] = c_k`, `a[S∪j] = −c_k` for `S ⊆ N∖{i,j}`, `|S| = k−1`
//! and `c_k = w(k) + w(k+1)`. The smallest perturbation that flips the sign of `D` is
//! therefore a hyperplane distance, which is what [`brute_force_safety_margin`] computes.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{TabulatedGame, ThresholdMode, ThresholdPolicy};
use crate::semivalues::{binomial, exact_semivalue, WeightFunction, WeightKind};

fn check_pair(game: &TabulatedGame, i: usize, j: usize) -> Result<()> {
    let n = game.n();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidArgument(alloc::format!("invalid player pair ({i}, {j}) for n = {n}")));
    }
    Ok(())
}

/// Calls `f(mask)` for every `S ⊆ N∖{i,j}` with `|S| = size`.
fn for_each_rest(n: usize, i: usize, j: usize, size: usize, mut f: impl FnMut(u64)) {
    let excluded = 1u64 << i | 1u64 << j;
    for mask in 0..1u64 << n {
        if mask & excluded == 0 && mask.count_ones() as usize == size {
            f(mask);
        }
    }
}

/// `Σ_{S ⊆ N∖{i,j}, |S| = k−1} U(S∪i) − U(S∪j)`.
pub fn delta_k(game: &TabulatedGame, i: usize, j: usize, k: usize) -> Result<f64> {
    check_pair(game, i, j)?;
    let n = game.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(alloc::format!("k = {k} outside 1..={}", n - 1)));
    }
    let mut sum = 0.0;
    for_each_rest(n, i, j, k - 1, |s| sum += game.at(s | 1 << i) - game.at(s | 1 << j));
    Ok(sum)
}

/// [`delta_k`] divided by its number of terms `C(n−2, k−1)`.
pub fn mean_delta_k(game: &TabulatedGame, i: usize, j: usize, k: usize) -> Result<f64> {
    Ok(delta_k(game, i, j, k)? / binomial(game.n() - 2, k - 1))
}

/// `n(φ_i − φ_j)`, computed both from the exact semivalue and from the size-stratified
/// differences; the two must agree within `1e-9`.
pub fn scaled_difference(game: &TabulatedGame, w: &WeightFunction, i: usize, j: usize) -> Result<f64> {
    check_pair(game, i, j)?;
    let n = game.n();
    let phi = exact_semivalue(game, w, &ThresholdPolicy::NONE)?.values;
    let direct = n as f64 * (phi[i] - phi[j]);
    let mut stratified = 0.0;
    for k in 1..n {
        stratified += (w.w(k) + w.w(k + 1)) * binomial(n - 2, k - 1) * mean_delta_k(game, i, j, k)?;
    }
    let scale = direct.abs().max(stratified.abs()).max(1.0);
    if (direct - stratified).abs() > 1e-9 * scale {
        return Err(Error::Consistency(alloc::format!(
            "scaled difference {direct} from values vs {stratified} from strata"
        )));
    }
    Ok(direct)
}

/// Whether `Δ_k ≥ τ` for every `k` in `1..n`.
pub fn is_tau_distinguishable(game: &TabulatedGame, i: usize, j: usize, tau: f64) -> Result<bool> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    for k in 1..game.n() {
        if delta_k(game, i, j, k)? < tau {
            return Ok(false);
        }
    }
    Ok(true)
}

fn strata(w: &WeightFunction) -> Vec<(f64, f64)> {
    let n = w.n();
    (1..n).map(|k| (binomial(n - 2, k - 1), w.w(k) + w.w(k + 1))).collect()
}

/// `τ·sqrt((Σ C(n−2,k−1)·c_k)² / Σ C(n−2,k−1)·c_k²)` with `c_k = w(k) + w(k+1)`.
pub fn safety_margin_closed_form(tau: f64, w: &WeightFunction) -> Result<f64> {
    if w.n() < 2 || !(tau > 0.0) {
        return Err(Error::InvalidArgument("need n >= 2 and tau > 0".into()));
    }
    let s = strata(w);
    let linear: f64 = s.iter().map(|(m, c)| m * c).sum();
    let quadratic: f64 = s.iter().map(|(m, c)| m * c * c).sum();
    Ok(tau * libm::sqrt(linear * linear / quadratic))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Random games tried per player pair.
    pub restarts: usize,
    pub seed: u64,
    /// Required agreement between the witness and the lower bound.
    pub tolerance: f64,
    pub bisection_steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { restarts: 8, seed: 0, tolerance: 1e-9, bisection_steps: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub tau: f64,
    /// Smallest sign-flipping perturbation norm found.
    pub epsilon_found: f64,
    /// Certified lower bound on the margin.
    pub lower_bound: f64,
    pub weights: WeightKind,
    pub thresholded: bool,
    pub converged: bool,
}

/// The direction `a` with `D = aᵀU` for the pair `(i, j)`.
fn difference_direction(n: usize, i: usize, j: usize, w: &WeightFunction) -> Vec<f64> {
    let mut a = vec![0.0; 1 << n];
    for k in 1..n {
        let c = w.w(k) + w.w(k + 1);
        for_each_rest(n, i, j, k - 1, |s| {
            a[(s | 1 << i) as usize] += c;
            a[(s | 1 << j) as usize] -= c;
        });
    }
    a
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A game in which `(i, j)` has mean stratified difference exactly `tau` at every size,
/// with entries drawn above `floor`. Among τ-distinguishable games these minimize `aᵀU`.
fn extremal_game<R: Rng>(n: usize, i: usize, j: usize, tau: f64, floor: f64, rng: &mut R) -> Vec<f64> {
    let mut u: Vec<f64> = (0..1u64 << n).map(|_| floor + rng.gen_range(0.0..1.0)).collect();
    for size in 0..n - 1 {
        for_each_rest(n, i, j, size, |s| {
            u[(s | 1 << i) as usize] = u[(s | 1 << j) as usize] + tau;
        });
    }
    u
}

/// Minimal perturbation `‖Û − U‖` that makes `D(Û)·D(U) ≤ 0`, searched over games that
/// τ-distinguish some pair. Under a hinge policy both tables pass through the hinge first;
/// the reported value is then a bisection witness along the projection direction, and the
/// hinge's 1-Lipschitz property supplies the lower bound.
pub fn brute_force_safety_margin(
    n: usize,
    tau: f64,
    w: &WeightFunction,
    policy: &ThresholdPolicy,
    cfg: &SearchConfig,
) -> Result<RobustnessReport> {
    if !(2..=5).contains(&n) || w.n() != n || !(tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "brute force needs 2 <= n <= 5, matching weights and tau > 0 (n = {n}, tau = {tau})"
        )));
    }
    policy.validate()?;
    let offset = match policy.mode {
        ThresholdMode::None => None,
        // utility tables here have reference value 1
        ThresholdMode::Hinge | ThresholdMode::FixedHinge => Some(policy.b),
        ThresholdMode::PruneRatio => {
            return Err(Error::InvalidArgument("prune-ratio thresholds are not continuous".into()))
        }
    };
    let hinge = |u: &[f64]| -> Vec<f64> {
        match offset {
            Some(b) => u.iter().map(|x| (x - b).max(0.0)).collect(),
            None => u.to_vec(),
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = f64::INFINITY;
    let mut best_lower = f64::INFINITY;
    let mut converged = true;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = difference_direction(n, i, j, w);
            let norm = libm::sqrt(dot(&a, &a));
            for _ in 0..cfg.restarts.max(1) {
                // keep entries above the hinge with room for a perturbation of any relevant size
                let floor = offset.unwrap_or(0.0) + 10.0 * tau * n as f64 + 1.0;
                let u = extremal_game(n, i, j, tau, floor, &mut rng);
                let d = dot(&a, &hinge(&u));
                if !(d > 0.0) {
                    return Err(Error::Consistency(alloc::format!(
                        "constructed game does not separate ({i}, {j}): D = {d}"
                    )));
                }
                let lower = d / norm;
                let witness = if offset.is_some() {
                    let flips = |t: f64| {
                        let moved: Vec<f64> = u.iter().zip(&a).map(|(x, ai)| x - t * ai / norm).collect();
                        dot(&a, &hinge(&moved)) * d <= 0.0
                    };
                    let mut hi = lower.max(f64::MIN_POSITIVE);
                    let mut grow = 0;
                    while !flips(hi) && grow < 64 {
                        hi *= 2.0;
                        grow += 1;
                    }
                    if !flips(hi) {
                        converged = false;
                        continue;
                    }
                    let mut lo = 0.0;
                    for _ in 0..cfg.bisection_steps {
                        let mid = 0.5 * (lo + hi);
                        if flips(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    hi
                } else {
                    lower
                };
                if witness - lower > cfg.tolerance * lower.max(1.0) {
                    converged = false;
                }
                best = best.min(witness);
                best_lower = best_lower.min(lower);
            }
        }
    }
    Ok(RobustnessReport {
        tau,
        epsilon_found: best,
        lower_bound: best_lower,
        weights: w.kind(),
        thresholded: offset.is_some(),
        converged: converged && best.is_finite(),
    })
}

/// A random weight function satisfying the semivalue normalization.
pub fn random_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<WeightFunction> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().enumerate().map(|(idx, x)| binomial(n - 1, idx) * x).sum();
    WeightFunction::custom(raw.iter().map(|x| x * n as f64 / total).collect())
}
