//! Closed-form and brute-force safety margins side by side.

use cfbanzhaf_core::game::ThresholdPolicy;
use cfbanzhaf_core::robustness::{brute_force_safety_margin, safety_margin_closed_form, SearchConfig};
use cfbanzhaf_core::semivalues::{WeightFunction, WeightKind};
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginRow {
    pub n: usize,
    pub tau: f64,
    pub weights: String,
    /// Hinge offset; 0 means no threshold.
    pub threshold: f64,
    pub closed_form: f64,
    pub brute_force: f64,
    pub lower_bound: f64,
    pub converged: bool,
    pub seed: u64,
}

pub fn weight_function(name: &str, n: usize) -> Result<WeightFunction> {
    match name.to_ascii_lowercase().as_str() {
        "banzhaf" => Ok(WeightFunction::banzhaf(n)?),
        "shapley" => Ok(WeightFunction::shapley(n)?),
        other => Err(HarnessError::Config(format!("unknown weights {other:?}; use banzhaf or shapley"))),
    }
}

pub fn safety_margin(n: usize, tau: f64, weights: &str, threshold: f64, restarts: usize, seed: u64) -> Result<MarginRow> {
    let w = weight_function(weights, n)?;
    let policy = if threshold == 0.0 { ThresholdPolicy::NONE } else { ThresholdPolicy::hinge(threshold) };
    let cfg = SearchConfig { restarts, seed, ..SearchConfig::default() };
    let report = brute_force_safety_margin(n, tau, &w, &policy, &cfg)?;
    let name = match w.kind() {
        WeightKind::Banzhaf => "banzhaf",
        WeightKind::Shapley => "shapley",
        WeightKind::Custom => "custom",
    };
    Ok(MarginRow {
        n,
        tau,
        weights: name.into(),
        threshold,
        closed_form: safety_margin_closed_form(tau, &w)?,
        brute_force: report.epsilon_found,
        lower_bound: report.lower_bound,
        converged: report.converged,
        seed,
    })
}
