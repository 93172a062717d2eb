use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use cfbanzhaf::complexity::run_sample_complexity_study;
use cfbanzhaf::config::{parse_threshold_mode, ExperimentConfig, MethodSpec, RunConfig};
use cfbanzhaf::core::datasets::generate;
use cfbanzhaf::core::explain::{explain, node_seed, CoalitionSize, ExplainerConfig};
use cfbanzhaf::core::gcn::train;
use cfbanzhaf::experiment::{
    coalition_variants, main_variants, prepare, run_variants, ExperimentOutcome, ExperimentRecord, ExplanationRecord,
};
use cfbanzhaf::formats::{load_graph, load_model, to_json_string, write_json, GraphFile, ModelFile};
use cfbanzhaf::margin::safety_margin;
use cfbanzhaf::output::{csv_string, write_csv_and_mirror};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Counterfactual edge-deletion explanations for GCN node classification with
/// thresholded Banzhaf values.
#[derive(Debug, Parser)]
#[command(name = "cfbanzhaf", version)]
struct Cli {
    /// JSON or TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration's).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Exit successfully even when some nodes could not be explained.
    #[arg(long, global = true)]
    allow_skips: bool,
    /// Fill the wall-time column of CSV output. Off by default so that reruns are
    /// byte-identical; the JSON mirror always carries timings.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark graph as JSON.
    GenDataset {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GCN on a graph file.
    Train {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to the configuration's, else 2.
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one or more nodes with a trained model.
    Explain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        node: Vec<usize>,
        #[arg(long, default_value = "banzhaf")]
        method: String,
        #[arg(long, default_value_t = 3)]
        budget: usize,
        /// 0 disables thresholding.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// prune-ratio, hinge or fixed-hinge.
        #[arg(long)]
        threshold_mode: Option<String>,
        #[arg(long)]
        coalitions: Option<usize>,
        #[arg(long)]
        coalition_size: Option<usize>,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        hops: Option<usize>,
        /// Also write the explanations as CSV plus a JSON mirror.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fidelity, time and call counts for every configured explainer.
    Experiment {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Banzhaf fidelity as the coalition count and coalition size vary.
    CoalitionSweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Defaults to budget - 1 ..= budget + 1.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Top-k failure rates of the Banzhaf estimators at the bound budgets.
    SampleComplexity {
        #[arg(long = "n", value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form and brute-force safety margins, printed as JSON.
    SafetyMargin {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        /// banzhaf or shapley.
        #[arg(long)]
        weights: Option<String>,
        /// Hinge offset; 0 disables it.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Comma-separated `method[:threshold]`, e.g. `shapley,banzhaf:0.05`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    coalitions: Option<usize>,
    #[arg(long)]
    coalition_size: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// CSV path; the JSON mirror goes next to it. Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        let e = &mut cfg.experiment;
        if let Some(d) = &self.dataset {
            cfg.dataset.kind = d.clone();
        }
        if let Some(b) = &self.budgets {
            e.budgets = b.clone();
        }
        if let Some(ms) = &self.methods {
            e.methods = ms.iter().map(|m| parse_method(m)).collect::<anyhow::Result<_>>()?;
        }
        set(&mut e.node_sample_fraction, self.fraction);
        set(&mut e.repeats, self.repeats);
        set(&mut e.noise_ratio, self.noise);
        set(&mut e.coalitions, self.coalitions);
        set(&mut e.shapley_permutations, self.permutations);
        set(&mut cfg.train.epochs, self.epochs);
        if self.coalition_size.is_some() {
            e.coalition_size = self.coalition_size;
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_method(s: &str) -> anyhow::Result<MethodSpec> {
    let (method, threshold) = match s.split_once(':') {
        Some((m, b)) => (m, b.parse::<f64>().with_context(|| format!("threshold in {s:?}"))?),
        None => (s, 0.0),
    };
    let spec = MethodSpec { method: method.trim().into(), threshold, mode: None };
    spec.method()?;
    Ok(spec)
}

#[derive(Serialize)]
struct ExperimentMirror<'a> {
    command: &'a str,
    /// Wall time covers explanation only; dataset generation and training are excluded.
    timing_note: &'static str,
    outcome: &'a ExperimentOutcome,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(skipped) => {
            eprintln!("{skipped} node(s) could not be explained; pass --allow-skips to accept this");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns the number of unexplained nodes that should fail the run.
fn run(cli: Cli) -> anyhow::Result<usize> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting the worker pool")?;

    let skipped = match cli.command {
        Command::GenDataset { kind, out } => {
            set(&mut cfg.dataset.kind, kind);
            let g = generate(&cfg.dataset.spec(cfg.seed)?)?;
            write_json(&out, &GraphFile::from(&g))?;
            eprintln!("wrote {} ({} nodes, {} edges)", out.display(), g.n(), g.edge_count());
            0
        }
        Command::Train { graph, layers, epochs, out } => {
            let g = load_graph(&graph)?;
            set(&mut cfg.train.epochs, epochs);
            let layers = layers.or(cfg.train.layers).unwrap_or(2);
            let (model, report) = train(&g, layers, &cfg.train.train_config(cfg.seed)?)?;
            write_json(&out, &ModelFile::from(&model))?;
            let summary = serde_json::json!({
                "layers": layers,
                "train_accuracy": report.train_accuracy,
                "test_accuracy": report.test_accuracy,
                "initial_loss": report.initial_loss,
                "final_loss": report.final_loss,
                "seed": cfg.seed,
            });
            print!("{}", to_json_string(&summary)?);
            0
        }
        Command::Explain {
            graph,
            model,
            node,
            method,
            budget,
            threshold,
            threshold_mode,
            coalitions,
            coalition_size,
            permutations,
            hops,
            out,
        } => {
            let g = load_graph(&graph)?;
            let m = load_model(&model)?;
            let spec = MethodSpec { method, threshold, mode: threshold_mode };
            if let Some(mode) = &spec.mode {
                parse_threshold_mode(mode)?;
            }
            let mut e = ExplainerConfig::new(spec.method()?, budget).with_threshold(spec.policy()?);
            set(&mut e.coalitions, coalitions);
            set(&mut e.shapley_permutations, permutations);
            if let Some(s) = coalition_size {
                e.coalition_size = CoalitionSize::Fixed(s);
            }
            e.hops = hops;
            e.validate()?;
            let mut records = Vec::with_capacity(node.len());
            let mut failed = 0;
            for &v in &node {
                let start = Instant::now();
                match explain(&g, &m, v, &e, node_seed(cfg.seed, v)) {
                    Ok(x) => {
                        if x.clamped {
                            log::warn!("node {v}: budget reduced to {} candidate edges", x.candidates);
                        }
                        records.push(ExplanationRecord::new(&x, &e, cfg.seed, Some(start.elapsed().as_secs_f64())));
                    }
                    Err(err) => {
                        eprintln!("node {v}: {err}");
                        failed += 1;
                    }
                }
            }
            if let ([_], [single]) = (node.as_slice(), records.as_slice()) {
                print!("{}", to_json_string(single)?);
            } else {
                print!("{}", to_json_string(&records)?);
            }
            if let Some(out) = out {
                let rows: Vec<_> = records.iter().map(|r| r.csv_row(cli.timing)).collect();
                write_csv_and_mirror(&out, &rows, &records)?;
            }
            failed
        }
        Command::Experiment { exp } => {
            exp.apply(&mut cfg)?;
            let ecfg = cfg.experiment_config();
            let prepared = prepare(&ecfg)?;
            let outcome = run_variants(&prepared, &ecfg, &main_variants(&ecfg)?)?;
            emit_experiment("experiment", &outcome, exp.out.as_deref(), cli.timing)?;
            outcome.errors.len()
        }
        Command::CoalitionSweep { exp, counts, sizes } => {
            exp.apply(&mut cfg)?;
            set(&mut cfg.sweep.counts, counts);
            if sizes.is_some() {
                cfg.sweep.sizes = sizes;
            }
            let ecfg: ExperimentConfig = cfg.experiment_config();
            let variants = coalition_variants(&ecfg, &cfg.sweep.counts, cfg.sweep.sizes.as_deref())?;
            let prepared = prepare(&ecfg)?;
            let outcome = run_variants(&prepared, &ecfg, &variants)?;
            emit_experiment("coalition-sweep", &outcome, exp.out.as_deref(), cli.timing)?;
            outcome.errors.len()
        }
        Command::SampleComplexity { n_values, k, epsilon, delta, trials, out } => {
            let s = &mut cfg.sample_complexity;
            set(&mut s.n_values, n_values);
            set(&mut s.k, k);
            set(&mut s.epsilon, epsilon);
            set(&mut s.delta, delta);
            set(&mut s.trials, trials);
            let rows = run_sample_complexity_study(&s.n_values, s.k, s.epsilon, s.delta, s.trials, cfg.seed)?;
            emit_rows(&rows, out.as_deref())?;
            0
        }
        Command::SafetyMargin { n, tau, weights, threshold, out } => {
            let s = &mut cfg.safety;
            set(&mut s.n, n);
            set(&mut s.tau, tau);
            set(&mut s.weights, weights);
            set(&mut s.threshold, threshold);
            let row = safety_margin(s.n, s.tau, &s.weights, s.threshold, s.restarts, cfg.seed)?;
            print!("{}", to_json_string(&row)?);
            if !row.converged {
                bail!("brute-force search did not converge");
            }
            if let Some(out) = out {
                write_csv_and_mirror(&out, std::slice::from_ref(&row), &row)?;
            }
            0
        }
    };
    Ok(if cli.allow_skips { 0 } else { skipped })
}

fn emit_experiment(command: &str, outcome: &ExperimentOutcome, out: Option<&Path>, timing: bool) -> anyhow::Result<()> {
    for e in &outcome.errors {
        log::warn!("repeat {} node {} ({} k={}): {}", e.repeat, e.node, e.method, e.budget, e.message);
    }
    let rows: Vec<ExperimentRecord> = if timing {
        outcome.records.clone()
    } else {
        outcome.records.iter().map(ExperimentRecord::without_timing).collect()
    };
    match out {
        Some(path) => {
            let mirror = ExperimentMirror {
                command,
                timing_note: "wall_time_s covers explanation only; dataset generation and training are excluded",
                outcome,
            };
            let json = write_csv_and_mirror(path, &rows, &mirror)?;
            eprintln!("wrote {} and {}", path.display(), json.display());
        }
        None => print!("{}", csv_string(&rows)?),
    }
    Ok(())
}

fn emit_rows<T: Serialize>(rows: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            write_csv_and_mirror(path, rows, &rows)?;
        }
        None => print!("{}", csv_string(rows)?),
    }
    Ok(())
}
