//! Counterfactual edge-deletion explainers and the fidelity metric.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{Coalition, EdgeGame, Game, ThresholdPolicy};
use crate::gcn::GcnModel;
use crate::graph::{EdgeId, LabeledGraph};
use crate::semivalues::{banzhaf_msr, shapley_perm_mc, top_k, SamplePolicy, SizeMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExplainMethod {
    Random,
    TopK,
    Greedy,
    Shapley,
    Banzhaf,
}

impl ExplainMethod {
    pub const ALL: [ExplainMethod; 5] = [
        ExplainMethod::Random,
        ExplainMethod::TopK,
        ExplainMethod::Greedy,
        ExplainMethod::Shapley,
        ExplainMethod::Banzhaf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExplainMethod::Random => "random",
            ExplainMethod::TopK => "topk",
            ExplainMethod::Greedy => "greedy",
            ExplainMethod::Shapley => "shapley",
            ExplainMethod::Banzhaf => "banzhaf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Size of the coalitions sampled by the Banzhaf explainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalitionSize {
    /// Same as the budget.
    Budget,
    Fixed(usize),
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainerConfig {
    pub method: ExplainMethod,
    pub budget: usize,
    /// Applied by the Banzhaf explainer only.
    pub threshold: ThresholdPolicy,
    pub coalitions: usize,
    pub coalition_size: CoalitionSize,
    pub shapley_permutations: usize,
    /// Candidate radius; `None` uses the model depth.
    pub hops: Option<usize>,
}

impl ExplainerConfig {
    pub fn new(method: ExplainMethod, budget: usize) -> Self {
        Self {
            method,
            budget,
            threshold: ThresholdPolicy::NONE,
            coalitions: 1500,
            coalition_size: CoalitionSize::Budget,
            shapley_permutations: 50,
            hops: None,
        }
    }

    pub fn with_threshold(mut self, threshold: ThresholdPolicy) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        if self.coalitions == 0 || self.shapley_permutations == 0 {
            return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
        }
        self.threshold.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub node: usize,
    /// Selected edges, most important first.
    pub edges: Vec<EdgeId>,
    pub original_class: usize,
    pub flipped: bool,
    pub candidates: usize,
    /// The budget exceeded the candidate count and was reduced to it.
    pub clamped: bool,
    pub utility_calls: usize,
    /// Distinct classifier evaluations behind those calls.
    pub evaluations: usize,
    pub pruned_count: usize,
}

/// Seed for one node's explanation, derived from the run seed.
pub fn node_seed(seed: u64, node: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng.next_u64()
}

/// Explains `v`; `seed` drives every random choice.
pub fn explain(
    g: &LabeledGraph,
    model: &GcnModel,
    v: usize,
    cfg: &ExplainerConfig,
    seed: u64,
) -> Result<Explanation> {
    cfg.validate()?;
    let game = EdgeGame::new(g, model, v, cfg.hops)?;
    let n = game.player_count();
    let k = cfg.budget.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut calls = 0;
    let mut pruned = 0;
    let chosen: Vec<usize> = match cfg.method {
        ExplainMethod::Random => rand::seq::index::sample(&mut rng, n, k).into_vec(),
        ExplainMethod::TopK => {
            let single: Vec<f64> =
                (0..n).map(|i| game.value(&Coalition::from_members(n, [i]))).collect();
            calls = n;
            top_k(&single, k)?
        }
        ExplainMethod::Greedy => {
            let mut picked = Vec::with_capacity(k);
            let mut current = Coalition::empty(n);
            for _ in 0..k {
                let mut best: Option<(usize, f64)> = None;
                for i in (0..n).filter(|&i| !current.contains(i)) {
                    let u = game.value(&current.with(i));
                    calls += 1;
                    if best.map_or(true, |(_, b)| u > b) {
                        best = Some((i, u));
                    }
                }
                let (i, _) = best.expect("k never exceeds the candidate count");
                current.insert(i);
                picked.push(i);
            }
            picked
        }
        ExplainMethod::Shapley => {
            let r = shapley_perm_mc(&game, cfg.shapley_permutations, &ThresholdPolicy::NONE, &mut rng)?;
            calls = r.utility_calls;
            r.top_k(k)?
        }
        ExplainMethod::Banzhaf => {
            let size = match cfg.coalition_size {
                CoalitionSize::Budget => SizeMode::FixedSize(k),
                CoalitionSize::Fixed(s) => SizeMode::FixedSize(s.min(n)),
                CoalitionSize::Uniform => SizeMode::Uniform,
            };
            let sample = SamplePolicy { count: cfg.coalitions, size, seed: rng.next_u64() };
            let r = banzhaf_msr(&game, &cfg.threshold, &sample)?;
            calls = r.utility_calls;
            pruned = r.pruned_count;
            r.top_k(k)?
        }
    };

    let removed = Coalition::from_members(n, chosen.iter().copied());
    Ok(Explanation {
        node: v,
        edges: chosen.iter().map(|&i| game.players()[i]).collect(),
        original_class: game.original_class(),
        flipped: game.flips(&removed),
        candidates: n,
        clamped: k < cfg.budget,
        utility_calls: calls,
        evaluations: game.evaluations(),
        pruned_count: pruned,
    })
}

/// Fraction of explained nodes whose prediction survives the deletion (lower is better).
pub fn fidelity(explanations: &[Explanation]) -> Result<f64> {
    if explanations.is_empty() {
        return Err(Error::InvalidArgument("fidelity of an empty explanation set".into()));
    }
    let kept = explanations.iter().filter(|e| !e.flipped).count();
    Ok(kept as f64 / explanations.len() as f64)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stub(flipped: bool) -> Explanation {
        Explanation {
            node: 0,
            edges: vec![],
            original_class: 0,
            flipped,
            candidates: 1,
            clamped: false,
            utility_calls: 0,
            evaluations: 0,
            pruned_count: 0,
        }
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(fidelity(&vec![stub(true); 5]).unwrap(), 0.0);
        assert_eq!(fidelity(&vec![stub(false); 5]).unwrap(), 1.0);
        let mixed: Vec<_> = (0..10).map(|i| stub(i < 4)).collect();
        assert!((fidelity(&mixed).unwrap() - 0.6).abs() < 1e-15);
        assert!(fidelity(&[]).is_err());
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in ExplainMethod::ALL {
            assert_eq!(ExplainMethod::parse(m.name()), Some(m));
        }
        assert_eq!(ExplainMethod::parse("BANZHAF"), Some(ExplainMethod::Banzhaf));
        assert_eq!(ExplainMethod::parse("cf-gnn"), None);
    }

    #[test]
    fn node_seeds_differ() {
        assert_ne!(node_seed(1, 0), node_seed(1, 1));
        assert_eq!(node_seed(1, 7), node_seed(1, 7));
    }
}
