//! Exact and sampled semivalues over a [`Game`](crate::game::Game).

mod bounds;
mod exact;
mod sampling;
mod weights;

pub use bounds::{required_samples_mc, required_samples_msr};
pub use exact::{exact_banzhaf, exact_semivalue, exact_shapley, EXACT_PLAYER_LIMIT};
pub use sampling::{
    banzhaf_mc, banzhaf_msr, msr_from_samples, shapley_perm_mc, CoalitionSampler, SamplePolicy,
    SizeMode,
};
pub use weights::{binomial, ln_binomial, WeightFunction, WeightKind};

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ExactSemivalue,
    ExactShapley,
    ExactBanzhaf,
    ShapleyPermMc,
    BanzhafMc,
    BanzhafMsr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExactSemivalue => "exact_semivalue",
            Method::ExactShapley => "exact_shapley",
            Method::ExactBanzhaf => "exact_banzhaf",
            Method::ShapleyPermMc => "shapley_perm_mc",
            Method::BanzhafMc => "banzhaf_mc",
            Method::BanzhafMsr => "banzhaf_msr",
        }
    }
}

/// Per-player values, indexed like the game's players.
#[derive(Debug, Clone, PartialEq)]
pub struct SemivalueResult {
    pub values: Vec<f64>,
    pub method: Method,
    /// Coalitions, permutations or per-player samples, depending on the method.
    pub samples_used: usize,
    /// Utility requests issued by the estimator (memo hits included).
    pub utility_calls: usize,
    /// Coalitions dropped by a prune-ratio threshold, whether evaluated or skipped.
    pub pruned_count: usize,
}

impl SemivalueResult {
    pub fn top_k(&self, k: usize) -> Result<Vec<usize>> {
        top_k(&self.values, k)
    }
}

/// Indices of the `k` largest values, in descending order. Ties go to the lower index
/// (for edge games: the lower canonical edge); NaN ranks below everything.
pub fn top_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "top-{k} requested from {} players",
            values.len()
        )));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| rank(values[b], values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

fn rank(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => a.partial_cmp(&b).unwrap(),
    }
}
