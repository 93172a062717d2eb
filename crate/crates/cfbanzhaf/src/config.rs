//! Run configuration: one JSON or TOML file with a section per concern. Every field
//! has a default, so an empty file is a valid configuration.

use std::path::Path;

use cfbanzhaf_core::datasets::{DatasetKind, DatasetSpec};
use cfbanzhaf_core::explain::{CoalitionSize, ExplainMethod, ExplainerConfig};
use cfbanzhaf_core::game::{ThresholdMode, ThresholdPolicy};
use cfbanzhaf_core::gcn::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub train: TrainSection,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
    pub sample_complexity: SampleComplexitySection,
    pub safety: SafetySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetConfig::default(),
            train: TrainSection::default(),
            experiment: ExperimentSection::default(),
            sweep: SweepSection::default(),
            sample_complexity: SampleComplexitySection::default(),
            safety: SafetySection::default(),
        }
    }
}

impl RunConfig {
    /// Parses by extension: `.toml` as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            Ok(toml::from_str(&text)?)
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            dataset: self.dataset.clone(),
            train: self.train.clone(),
            settings: self.experiment.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: String,
    pub base_size: Option<usize>,
    pub motif_count: Option<usize>,
    pub extra_edge_fraction: Option<f64>,
    pub feature_dim: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::TreeCycles.name().into(),
            base_size: None,
            motif_count: None,
            extra_edge_fraction: None,
            feature_dim: None,
        }
    }
}

impl DatasetConfig {
    pub fn kind(&self) -> Result<DatasetKind> {
        DatasetKind::parse(&self.kind)
            .ok_or_else(|| HarnessError::Config(format!("unknown dataset kind {:?}", self.kind)))
    }

    pub fn spec(&self, seed: u64) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::defaults(self.kind()?, seed);
        if let Some(v) = self.base_size {
            spec.base_size = v;
        }
        if let Some(v) = self.motif_count {
            spec.motif_count = v;
        }
        if let Some(v) = self.extra_edge_fraction {
            spec.extra_edge_fraction = v;
        }
        if let Some(v) = self.feature_dim {
            spec.feature_dim = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Defaults to the dataset's conventional depth.
    pub layers: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub hidden_dim: usize,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub bias_init: f64,
    pub restarts: usize,
    pub screen_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            layers: None,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            train_fraction: d.train_fraction,
            hidden_dim: d.hidden_dim,
            optimizer: "adam".into(),
            bias_init: d.bias_init,
            restarts: d.restarts,
            screen_epochs: d.screen_epochs,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.to_ascii_lowercase().as_str() {
            "adam" => Optimizer::Adam,
            "sgd" | "gd" => Optimizer::Sgd,
            other => return Err(HarnessError::Config(format!("unknown optimizer {other:?}"))),
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            train_fraction: self.train_fraction,
            hidden_dim: self.hidden_dim,
            optimizer,
            bias_init: self.bias_init,
            restarts: self.restarts,
            screen_epochs: self.screen_epochs,
            seed,
        })
    }
}

/// One explainer in an experiment. `threshold = 0` means no thresholding; a positive
/// threshold uses `mode`, which defaults to coalition pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: String,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub mode: Option<String>,
}

impl MethodSpec {
    pub fn new(method: ExplainMethod, threshold: f64) -> Self {
        Self { method: method.name().into(), threshold, mode: None }
    }

    pub fn method(&self) -> Result<ExplainMethod> {
        ExplainMethod::parse(&self.method)
            .ok_or_else(|| HarnessError::Config(format!("unknown method {:?}", self.method)))
    }

    pub fn policy(&self) -> Result<ThresholdPolicy> {
        let mode = match &self.mode {
            Some(m) => parse_threshold_mode(m)?,
            None if self.threshold == 0.0 => ThresholdMode::None,
            None => ThresholdMode::PruneRatio,
        };
        let policy = ThresholdPolicy { mode, b: if mode == ThresholdMode::None { 0.0 } else { self.threshold } };
        policy.validate()?;
        Ok(policy)
    }
}

pub fn parse_threshold_mode(s: &str) -> Result<ThresholdMode> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "none" => Ok(ThresholdMode::None),
        "hinge" => Ok(ThresholdMode::Hinge),
        "fixed-hinge" => Ok(ThresholdMode::FixedHinge),
        "prune-ratio" | "prune" => Ok(ThresholdMode::PruneRatio),
        other => Err(HarnessError::Config(format!("unknown threshold mode {other:?}"))),
    }
}

pub fn threshold_mode_name(mode: ThresholdMode) -> &'static str {
    match mode {
        ThresholdMode::None => "none",
        ThresholdMode::Hinge => "hinge",
        ThresholdMode::FixedHinge => "fixed-hinge",
        ThresholdMode::PruneRatio => "prune-ratio",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub budgets: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub node_sample_fraction: f64,
    pub repeats: usize,
    pub noise_ratio: f64,
    pub coalitions: usize,
    /// Fixed coalition size; defaults to the budget.
    pub coalition_size: Option<usize>,
    pub shapley_permutations: usize,
    /// Candidate radius; defaults to the model depth.
    pub hops: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        use ExplainMethod::*;
        Self {
            budgets: vec![3],
            methods: vec![
                MethodSpec::new(Random, 0.0),
                MethodSpec::new(TopK, 0.0),
                MethodSpec::new(Greedy, 0.0),
                MethodSpec::new(Shapley, 0.0),
                MethodSpec::new(Banzhaf, 0.0),
                MethodSpec::new(Banzhaf, 0.01),
                MethodSpec::new(Banzhaf, 0.05),
            ],
            node_sample_fraction: 0.5,
            repeats: 3,
            noise_ratio: 0.0,
            coalitions: 1500,
            coalition_size: None,
            shapley_permutations: 50,
            hops: None,
        }
    }
}

/// Everything `run_experiment` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub train: TrainSection,
    pub settings: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RunConfig::default().experiment_config()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if s.repeats == 0 {
            return Err(HarnessError::Config("repeats must be >= 1".into()));
        }
        if !(s.node_sample_fraction > 0.0 && s.node_sample_fraction <= 1.0) {
            return Err(HarnessError::Config("node_sample_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&s.noise_ratio) {
            return Err(HarnessError::Config("noise_ratio must lie in [0, 1]".into()));
        }
        if s.budgets.is_empty() || s.methods.is_empty() {
            return Err(HarnessError::Config("need at least one budget and one method".into()));
        }
        self.dataset.spec(self.seed)?;
        self.train.train_config(self.seed)?;
        for m in &s.methods {
            self.explainer(m, s.budgets[0])?;
        }
        Ok(())
    }

    pub fn explainer(&self, m: &MethodSpec, budget: usize) -> Result<ExplainerConfig> {
        let s = &self.settings;
        let mut cfg = ExplainerConfig::new(m.method()?, budget).with_threshold(m.policy()?);
        cfg.coalitions = s.coalitions;
        cfg.coalition_size = s.coalition_size.map_or(CoalitionSize::Budget, CoalitionSize::Fixed);
        cfg.shapley_permutations = s.shapley_permutations;
        cfg.hops = s.hops;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub counts: Vec<usize>,
    /// Defaults to `budget - 1 ..= budget + 1`.
    pub sizes: Option<Vec<usize>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { counts: vec![500, 1000, 1500, 2000], sizes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleComplexitySection {
    pub n_values: Vec<usize>,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
}

impl Default for SampleComplexitySection {
    fn default() -> Self {
        Self { n_values: vec![8], k: 3, epsilon: 0.2, delta: 0.1, trials: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySection {
    pub n: usize,
    pub tau: f64,
    /// `banzhaf` or `shapley`.
    pub weights: String,
    /// Hinge offset; 0 disables the hinge.
    pub threshold: f64,
    pub restarts: usize,
}

impl Default for SafetySection {
    fn default() -> Self {
        Self { n: 4, tau: 1.0, weights: "banzhaf".into(), threshold: 0.0, restarts: 8 }
    }
}
