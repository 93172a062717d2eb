//! Experiment orchestration: train once, then explain sampled nodes with every
//! configured explainer and aggregate fidelity, time and call counts over repeats.

use std::time::{Duration, Instant};

use cfbanzhaf_core::datasets::generate;
use cfbanzhaf_core::explain::{explain, mean_sd, node_seed, CoalitionSize, ExplainMethod, ExplainerConfig, Explanation};
use cfbanzhaf_core::gcn::{train, GcnModel, TrainReport};
use cfbanzhaf_core::graph::LabeledGraph;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{threshold_mode_name, ExperimentConfig, MethodSpec};
use crate::error::{HarnessError, Result};

const NOISE_STREAM: u64 = 1;
const NODE_SAMPLE_STREAM: u64 = 2;
const REPEAT_SEED_STREAM: u64 = 3;

/// A dataset with its trained classifier. Generation and training are not timed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: String,
    pub noise_ratio: f64,
    pub graph: LabeledGraph,
    pub model: GcnModel,
    pub train_report: TrainReport,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let kind = cfg.dataset.kind()?;
    let mut graph = generate(&cfg.dataset.spec(cfg.seed)?)?;
    let noise_ratio = cfg.settings.noise_ratio;
    if noise_ratio > 0.0 {
        let mut rng = stream_rng(cfg.seed, NOISE_STREAM, 0);
        graph = graph.inject_noise_edges(noise_ratio, &mut rng)?;
    }
    let layers = cfg.train.layers.unwrap_or(kind.default_layers());
    let (model, train_report) = train(&graph, layers, &cfg.train.train_config(cfg.seed)?)
        .map_err(|e| HarnessError::Training(format!("{} (dataset {}, {layers} layers)", e, kind.name())))?;
    log::info!(
        "trained {}-layer GCN on {}: train acc {:.3}, test acc {:.3}, loss {:.4} -> {:.4}",
        layers,
        kind.name(),
        train_report.train_accuracy,
        train_report.test_accuracy,
        train_report.initial_loss,
        train_report.final_loss
    );
    Ok(Prepared { dataset: kind.name().into(), noise_ratio, graph, model, train_report })
}

/// Independent generator per purpose and index.
fn stream_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream << 32 | index as u64);
    rng
}

/// Nodes explained in repeat `r`: a uniform sample of `ceil(fraction · n)`, ascending.
pub fn sample_nodes(n: usize, fraction: f64, seed: u64, repeat: usize) -> Vec<usize> {
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = stream_rng(seed, NODE_SAMPLE_STREAM, repeat);
    let mut nodes = rand::seq::index::sample(&mut rng, n, count).into_vec();
    nodes.sort_unstable();
    nodes
}

/// Seed for explaining node `v` in repeat `r`; shared by all explainers in that repeat.
pub fn explanation_seed(seed: u64, repeat: usize, v: usize) -> u64 {
    node_seed(stream_rng(seed, REPEAT_SEED_STREAM, repeat).next_u64(), v)
}

/// One explainer setting to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    /// `main`, `coalitions` or `coalition-size`.
    pub series: &'static str,
    pub explainer: ExplainerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub series: String,
    pub dataset: String,
    pub noise_ratio: f64,
    pub method: String,
    pub budget: usize,
    pub threshold_mode: String,
    pub threshold: f64,
    /// Coalitions sampled per node (Banzhaf only).
    pub coalitions: Option<usize>,
    /// Fixed coalition size (Banzhaf only).
    pub coalition_size: Option<usize>,
    pub fidelity_mean: f64,
    /// Across repeats.
    pub fidelity_sd: f64,
    /// Explanation time only, summed over nodes and averaged over repeats. Left out of
    /// reproducible output.
    pub wall_time_s: Option<f64>,
    /// Per repeat, averaged over repeats.
    pub utility_calls: f64,
    pub evaluations: f64,
    pub pruned_count: f64,
    pub nodes: usize,
    pub skipped: usize,
    pub clamped: usize,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeError {
    pub repeat: usize,
    pub node: usize,
    pub method: String,
    pub budget: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub train: TrainSummary,
    pub records: Vec<ExperimentRecord>,
    pub errors: Vec<NodeError>,
}

impl ExperimentRecord {
    pub fn without_timing(&self) -> Self {
        Self { wall_time_s: None, ..self.clone() }
    }
}

impl ExperimentOutcome {
    pub fn record(&self, method: ExplainMethod, threshold: f64) -> Option<&ExperimentRecord> {
        self.records.iter().find(|r| r.method == method.name() && r.threshold == threshold)
    }
}

/// A single explanation, as printed by `explain`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationRecord {
    pub node: usize,
    pub method: String,
    pub budget: usize,
    pub threshold_mode: String,
    pub threshold: f64,
    /// Most important first.
    pub edges: Vec<[usize; 2]>,
    pub original_class: usize,
    pub flipped: bool,
    pub candidates: usize,
    pub clamped: bool,
    pub utility_calls: usize,
    pub evaluations: usize,
    pub pruned_count: usize,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
}

/// `ExplanationRecord` with the edge list flattened to `u-v u-v ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationRow {
    pub node: usize,
    pub method: String,
    pub budget: usize,
    pub threshold_mode: String,
    pub threshold: f64,
    pub edges: String,
    pub original_class: usize,
    pub flipped: bool,
    pub candidates: usize,
    pub clamped: bool,
    pub utility_calls: usize,
    pub evaluations: usize,
    pub pruned_count: usize,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
}

impl ExplanationRecord {
    pub fn new(x: &Explanation, cfg: &ExplainerConfig, seed: u64, wall_time_s: Option<f64>) -> Self {
        Self {
            node: x.node,
            method: cfg.method.name().into(),
            budget: cfg.budget,
            threshold_mode: threshold_mode_name(cfg.threshold.mode).into(),
            threshold: cfg.threshold.b,
            edges: x.edges.iter().map(|e| [e.u, e.v]).collect(),
            original_class: x.original_class,
            flipped: x.flipped,
            candidates: x.candidates,
            clamped: x.clamped,
            utility_calls: x.utility_calls,
            evaluations: x.evaluations,
            pruned_count: x.pruned_count,
            wall_time_s,
            seed,
        }
    }

    pub fn csv_row(&self, timing: bool) -> ExplanationRow {
        let edges: Vec<String> = self.edges.iter().map(|[u, v]| format!("{u}-{v}")).collect();
        ExplanationRow {
            node: self.node,
            method: self.method.clone(),
            budget: self.budget,
            threshold_mode: self.threshold_mode.clone(),
            threshold: self.threshold,
            edges: edges.join(" "),
            original_class: self.original_class,
            flipped: self.flipped,
            candidates: self.candidates,
            clamped: self.clamped,
            utility_calls: self.utility_calls,
            evaluations: self.evaluations,
            pruned_count: self.pruned_count,
            wall_time_s: if timing { self.wall_time_s } else { None },
            seed: self.seed,
        }
    }
}

/// The `main` series: every configured method at every budget.
pub fn main_variants(cfg: &ExperimentConfig) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    for &budget in &cfg.settings.budgets {
        for m in &cfg.settings.methods {
            out.push(Variant { series: "main", explainer: cfg.explainer(m, budget)? });
        }
    }
    Ok(out)
}

/// Banzhaf entries swept over coalition counts, then over fixed coalition sizes.
pub fn coalition_variants(cfg: &ExperimentConfig, counts: &[usize], sizes: Option<&[usize]>) -> Result<Vec<Variant>> {
    let banzhaf: Vec<&MethodSpec> = cfg
        .settings
        .methods
        .iter()
        .filter(|m| m.method().ok() == Some(ExplainMethod::Banzhaf))
        .collect();
    if banzhaf.is_empty() {
        return Err(HarnessError::Config("a coalition sweep needs at least one banzhaf method".into()));
    }
    let mut out = Vec::new();
    for &budget in &cfg.settings.budgets {
        for m in &banzhaf {
            let base = cfg.explainer(m, budget)?;
            for &count in counts {
                let mut e = base;
                e.coalitions = count;
                e.validate()?;
                out.push(Variant { series: "coalitions", explainer: e });
            }
            let default_sizes: Vec<usize> = (budget.saturating_sub(1).max(1)..=budget + 1).collect();
            for &size in sizes.unwrap_or(&default_sizes) {
                if size == 0 {
                    return Err(HarnessError::Config("coalition sizes must be >= 1".into()));
                }
                let mut e = base;
                e.coalition_size = CoalitionSize::Fixed(size);
                out.push(Variant { series: "coalition-size", explainer: e });
            }
        }
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let prepared = prepare(cfg)?;
    run_variants(&prepared, cfg, &main_variants(cfg)?)
}

pub fn run_coalition_variation(
    cfg: &ExperimentConfig,
    counts: &[usize],
    sizes: Option<&[usize]>,
) -> Result<ExperimentOutcome> {
    let prepared = prepare(cfg)?;
    run_variants(&prepared, cfg, &coalition_variants(cfg, counts, sizes)?)
}

struct Timed {
    result: cfbanzhaf_core::Result<Explanation>,
    elapsed: Duration,
}

/// Runs on the current rayon pool; results do not depend on its size.
pub fn run_variants(prepared: &Prepared, cfg: &ExperimentConfig, variants: &[Variant]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let s = &cfg.settings;
    let n = prepared.graph.n();
    let samples: Vec<Vec<usize>> =
        (0..s.repeats).map(|r| sample_nodes(n, s.node_sample_fraction, cfg.seed, r)).collect();

    let mut records = Vec::with_capacity(variants.len());
    let mut errors = Vec::new();
    for variant in variants {
        let e = &variant.explainer;
        let mut fidelities = Vec::with_capacity(s.repeats);
        let (mut seconds, mut calls, mut evals, mut pruned) = (0.0, 0.0, 0.0, 0.0);
        let (mut explained, mut skipped, mut clamped) = (0, 0, 0);
        for (r, nodes) in samples.iter().enumerate() {
            let timed: Vec<Timed> = nodes
                .par_iter()
                .map(|&v| {
                    let start = Instant::now();
                    let result = explain(&prepared.graph, &prepared.model, v, e, explanation_seed(cfg.seed, r, v));
                    Timed { result, elapsed: start.elapsed() }
                })
                .collect();
            let mut kept = 0usize;
            let mut done = 0usize;
            for (t, &v) in timed.iter().zip(nodes) {
                seconds += t.elapsed.as_secs_f64();
                match &t.result {
                    Ok(x) => {
                        done += 1;
                        kept += usize::from(!x.flipped);
                        clamped += usize::from(x.clamped);
                        calls += x.utility_calls as f64;
                        evals += x.evaluations as f64;
                        pruned += x.pruned_count as f64;
                    }
                    Err(err) => {
                        skipped += 1;
                        errors.push(NodeError {
                            repeat: r,
                            node: v,
                            method: e.method.name().into(),
                            budget: e.budget,
                            message: err.to_string(),
                        });
                    }
                }
            }
            explained += done;
            if done > 0 {
                fidelities.push(kept as f64 / done as f64);
            }
        }
        if fidelities.is_empty() {
            log::warn!("{} at k={} explained no node", e.method.name(), e.budget);
        }
        let (fidelity_mean, fidelity_sd) = mean_sd(&fidelities);
        let reps = s.repeats as f64;
        let banzhaf = e.method == ExplainMethod::Banzhaf;
        records.push(ExperimentRecord {
            series: variant.series.into(),
            dataset: prepared.dataset.clone(),
            noise_ratio: prepared.noise_ratio,
            method: e.method.name().into(),
            budget: e.budget,
            threshold_mode: threshold_mode_name(e.threshold.mode).into(),
            threshold: e.threshold.b,
            coalitions: banzhaf.then_some(e.coalitions),
            coalition_size: match e.coalition_size {
                CoalitionSize::Fixed(size) if banzhaf => Some(size),
                CoalitionSize::Budget if banzhaf => Some(e.budget),
                _ => None,
            },
            fidelity_mean,
            fidelity_sd,
            wall_time_s: Some(seconds / reps),
            utility_calls: calls / reps,
            evaluations: evals / reps,
            pruned_count: pruned / reps,
            nodes: explained,
            skipped,
            clamped,
            repeats: s.repeats,
            seed: cfg.seed,
        });
        log::info!(
            "{:<8} k={} b={:<5} fidelity {:.3} ± {:.3}, {:.2}s, {:.0} calls/repeat",
            e.method.name(),
            e.budget,
            e.threshold.b,
            fidelity_mean,
            fidelity_sd,
            seconds / reps,
            calls / reps
        );
    }
    Ok(ExperimentOutcome {
        train: TrainSummary {
            train_accuracy: prepared.train_report.train_accuracy,
            test_accuracy: prepared.train_report.test_accuracy,
            final_loss: prepared.train_report.final_loss,
        },
        records,
        errors,
    })
}
