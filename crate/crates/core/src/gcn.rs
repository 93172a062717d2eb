//! A small graph convolutional network: `H' = act(Â H W + b)` with symmetric
//! renormalization, ReLU on hidden layers and a softmax read-out.
//!
//! All kernels iterate a node's closed neighborhood in ascending id order, so the
//! single-node forward pass used by the explainers is bit-identical to the
//! corresponding row of the full forward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, Neighborhood};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `input_dim × output_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self { weight: Matrix::zeros(input_dim, output_dim), bias: vec![0.0; output_dim] }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Reusable buffers for single-node forward passes.
#[derive(Debug, Clone, Default)]
pub struct ForwardScratch {
    pos: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    layers: Vec<Layer>,
}

impl GcnModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("a GCN needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Dimension(format!("layer {i}: bias length {}", l.bias.len())));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].output_dim(),
                    i + 1,
                    w[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `dims = [input, hidden..., classes]`, all parameters zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        for layer in &mut model.layers {
            let limit = libm::sqrt(6.0 / (layer.input_dim() + layer.output_dim()) as f64);
            for w in layer.weight.as_mut_slice() {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "features have dimension {}, model expects {}",
                features.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Class probabilities for every node (`n × C`).
    pub fn forward(&self, g: &LabeledGraph) -> Result<Matrix> {
        self.check_input(g.features())?;
        let mut logits = self.full_pass(g, g.features(), None);
        for r in 0..logits.rows() {
            softmax_in_place(logits.row_mut(r));
        }
        Ok(logits)
    }

    /// Probability vector of node `v` on `g`.
    pub fn node_probabilities(&self, g: &LabeledGraph, v: usize) -> Result<Vec<f64>> {
        self.check_input(g.features())?;
        g.check_node(v)?;
        Ok(self.node_probabilities_on(g, g.features(), v))
    }

    /// Probability vector of node `v`, touching only its receptive field in `adj`.
    pub fn node_probabilities_on<N: Neighborhood>(
        &self,
        adj: &N,
        features: &Matrix,
        v: usize,
    ) -> Vec<f64> {
        self.node_probabilities_with(adj, features, v, &mut ForwardScratch::default())
    }

    /// [`node_probabilities_on`](Self::node_probabilities_on) reusing buffers across calls.
    pub fn node_probabilities_with<N: Neighborhood>(
        &self,
        adj: &N,
        features: &Matrix,
        v: usize,
        buffers: &mut ForwardScratch,
    ) -> Vec<f64> {
        let depth = self.layers.len();
        // BFS order; nodes within distance r form a prefix.
        let n = adj.node_count();
        if buffers.pos.len() < n {
            buffers.pos.resize(n, usize::MAX);
        }
        let pos = &mut buffers.pos;
        let mut order = vec![v];
        let mut prefix_end = vec![1usize; depth + 1];
        pos[v] = 0;
        let mut frontier_start = 0;
        for d in 1..=depth {
            let frontier_end = order.len();
            for idx in frontier_start..frontier_end {
                let u = order[idx];
                adj.for_each_neighbor(u, |w| {
                    if pos[w] == usize::MAX {
                        pos[w] = order.len();
                        order.push(w);
                    }
                });
            }
            frontier_start = frontier_end;
            prefix_end[d] = order.len();
        }
        let pos = &*pos;

        let mut prev: Vec<f64> = Vec::new();
        let mut prev_width = features.cols();
        let mut scratch = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let rows = prefix_end[depth - l - 1];
            let out_dim = layer.output_dim();
            let mut cur = vec![0.0; rows * out_dim];
            scratch.resize(layer.input_dim(), 0.0);
            for (idx, &u) in order[..rows].iter().enumerate() {
                let row_of = |j: usize| -> &[f64] {
                    if l == 0 {
                        features.row(j)
                    } else {
                        let p = pos[j];
                        &prev[p * prev_width..(p + 1) * prev_width]
                    }
                };
                aggregate_row(adj, u, row_of, &mut scratch);
                let out = &mut cur[idx * out_dim..(idx + 1) * out_dim];
                affine_row(&scratch, layer, out);
                if l + 1 < self.layers.len() {
                    relu_in_place(out);
                }
            }
            prev = cur;
            prev_width = out_dim;
        }
        for &u in &order {
            buffers.pos[u] = usize::MAX;
        }
        prev.truncate(prev_width);
        softmax_in_place(&mut prev);
        prev
    }

    pub fn predicted_class(&self, g: &LabeledGraph, v: usize) -> Result<usize> {
        Ok(argmax(&self.node_probabilities(g, v)?))
    }

    /// Pre-softmax outputs for every node; optionally records per-layer caches.
    fn full_pass<N: Neighborhood>(
        &self,
        adj: &N,
        features: &Matrix,
        mut cache: Option<&mut Vec<LayerCache>>,
    ) -> Matrix {
        let mut h = features.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let agg = aggregate_all(adj, &h);
            let mut z = Matrix::zeros(agg.rows(), layer.output_dim());
            for r in 0..agg.rows() {
                affine_row(agg.row(r), layer, z.row_mut(r));
            }
            let last = l + 1 == self.layers.len();
            let mut out = z.clone();
            if !last {
                for r in 0..out.rows() {
                    relu_in_place(out.row_mut(r));
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.push(LayerCache { aggregated: agg, pre_activation: z });
            }
            h = out;
        }
        h
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let w = layer.weight.as_slice().len();
            if index < w {
                return &mut layer.weight.as_mut_slice()[index];
            }
            index -= w;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range")
    }

    /// Mean cross-entropy over `nodes` plus `weight_decay/2 · Σ‖W‖²`, and its gradient.
    pub fn loss_and_gradient(
        &self,
        g: &LabeledGraph,
        labels: &[usize],
        nodes: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Gradients)> {
        self.check_input(g.features())?;
        if labels.len() != g.n() {
            return Err(Error::Dimension("labels length".into()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("loss needs at least one node".into()));
        }
        let classes = self.class_count();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Dimension(format!("label {bad} >= class count {classes}")));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.full_pass(g, g.features(), Some(&mut caches));

        let scale = 1.0 / nodes.len() as f64;
        let mut loss = 0.0;
        let mut delta = Matrix::zeros(logits.rows(), classes);
        for &v in nodes {
            let mut p = logits.row(v).to_vec();
            softmax_in_place(&mut p);
            loss -= libm::log(p[labels[v]].max(f64::MIN_POSITIVE)) * scale;
            let d = delta.row_mut(v);
            for c in 0..classes {
                d[c] += (p[c] - if c == labels[v] { 1.0 } else { 0.0 }) * scale;
            }
        }
        for layer in &self.layers {
            loss += 0.5 * weight_decay * layer.weight.as_slice().iter().map(|w| w * w).sum::<f64>();
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let cache = &caches[l];
            let mut d_weight = cache.aggregated.t_matmul(&delta);
            for (g, w) in d_weight.as_mut_slice().iter_mut().zip(layer.weight.as_slice()) {
                *g += weight_decay * w;
            }
            let mut d_bias = vec![0.0; layer.output_dim()];
            for r in 0..delta.rows() {
                for (b, d) in d_bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            grads.push(Layer { weight: d_weight, bias: d_bias });
            if l > 0 {
                let d_agg = delta.matmul_t(&layer.weight);
                // Â is symmetric, so back-propagating through aggregation is aggregation again.
                let mut d_h = aggregate_all(g, &d_agg);
                let z_prev = &caches[l - 1].pre_activation;
                for (d, &z) in d_h.as_mut_slice().iter_mut().zip(z_prev.as_slice()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = d_h;
            }
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

struct LayerCache {
    aggregated: Matrix,
    pre_activation: Matrix,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.weight.as_mut_slice().iter_mut().for_each(|w| *w *= factor);
            layer.bias.iter_mut().for_each(|b| *b *= factor);
        }
        out
    }
}

/// `Σ_{j ∈ N(u) ∪ {u}} h_j / sqrt(d̃_u d̃_j)`, neighbors visited in ascending order.
fn aggregate_row<'a, N: Neighborhood>(
    adj: &N,
    u: usize,
    row_of: impl Fn(usize) -> &'a [f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let du = (adj.degree(u) + 1) as f64;
    let mut self_done = false;
    let add = |j: usize, out: &mut [f64]| {
        let dj = if j == u { du } else { (adj.degree(j) + 1) as f64 };
        let coef = 1.0 / libm::sqrt(du * dj);
        for (o, &h) in out.iter_mut().zip(row_of(j)) {
            *o += coef * h;
        }
    };
    adj.for_each_neighbor(u, |j| {
        if !self_done && j > u {
            add(u, out);
            self_done = true;
        }
        add(j, out);
    });
    if !self_done {
        add(u, out);
    }
}

fn aggregate_all<N: Neighborhood>(adj: &N, h: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(h.rows(), h.cols());
    for u in 0..h.rows() {
        aggregate_row(adj, u, |j| h.row(j), out.row_mut(u));
    }
    out
}

fn affine_row(input: &[f64], layer: &Layer, out: &mut [f64]) {
    out.copy_from_slice(&layer.bias);
    for (k, &a) in input.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(layer.weight.row(k)) {
            *o += a * w;
        }
    }
}

fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Sgd,
    /// Adam with the usual (0.9, 0.999, 1e-8) moments.
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub hidden_dim: usize,
    pub optimizer: Optimizer,
    /// Biases start uniform in `±bias_init`. With constant node features a zero bias
    /// leaves every hidden unit linear in the node's aggregated degree term.
    pub bias_init: f64,
    /// Independent initializations screened for `screen_epochs`; the one with the lowest
    /// training loss is trained for the remaining epochs.
    pub restarts: usize,
    pub screen_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.02,
            weight_decay: 0.0,
            train_fraction: 0.8,
            hidden_dim: 20,
            optimizer: Optimizer::Adam,
            bias_init: 1.0,
            restarts: 8,
            screen_epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
}

/// Optimizer state for one model.
struct Trainer {
    model: GcnModel,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: usize,
    initial_loss: f64,
    loss: f64,
}

impl Trainer {
    fn new(model: GcnModel) -> Self {
        let total = model.param_count();
        Self {
            model,
            first_moment: vec![0.0; total],
            second_moment: vec![0.0; total],
            steps: 0,
            initial_loss: f64::NAN,
            loss: f64::NAN,
        }
    }

    fn run(&mut self, g: &LabeledGraph, nodes: &[usize], cfg: &TrainConfig, epochs: usize) -> Result<()> {
        let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
        for _ in 0..epochs {
            let (loss, grads) = self.model.loss_and_gradient(g, g.labels(), nodes, cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: self.steps, loss });
            }
            if self.steps == 0 {
                self.initial_loss = loss;
            }
            self.loss = loss;
            self.steps += 1;
            let t = self.steps as f64;
            for (i, &gr) in grads.flat().iter().enumerate() {
                let step = match cfg.optimizer {
                    Optimizer::Sgd => cfg.learning_rate * gr,
                    Optimizer::Adam => {
                        let m = &mut self.first_moment[i];
                        let v = &mut self.second_moment[i];
                        *m = beta1 * *m + (1.0 - beta1) * gr;
                        *v = beta2 * *v + (1.0 - beta2) * gr * gr;
                        let mh = *m / (1.0 - libm::pow(beta1, t));
                        let vh = *v / (1.0 - libm::pow(beta2, t));
                        cfg.learning_rate * mh / (libm::sqrt(vh) + eps)
                    }
                };
                *self.model.param_mut(i) -= step;
            }
        }
        Ok(())
    }
}

fn initial_model<R: Rng + ?Sized>(dims: &[usize], bias_init: f64, rng: &mut R) -> Result<GcnModel> {
    let mut model = GcnModel::glorot(dims, rng)?;
    if bias_init > 0.0 {
        for layer in &mut model.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-bias_init..bias_init);
            }
        }
    }
    Ok(model)
}

/// Full-batch training of a `layers`-deep GCN on the graph's labels.
///
/// Deterministic in `cfg.seed`.
pub fn train(g: &LabeledGraph, layers: usize, cfg: &TrainConfig) -> Result<(GcnModel, TrainReport)> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be > 0".into()));
    }
    if layers == 0 {
        return Err(Error::InvalidArgument("need at least one layer".into()));
    }
    let classes = g.class_count();
    if classes == 0 {
        return Err(Error::InvalidArgument("graph has no labels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes: Vec<usize> = (0..g.n()).collect();
    nodes.shuffle(&mut rng);
    let cut = (libm::round(cfg.train_fraction * g.n() as f64) as usize).clamp(1, g.n());
    let mut train_nodes = nodes[..cut].to_vec();
    let mut test_nodes = nodes[cut..].to_vec();
    train_nodes.sort_unstable();
    test_nodes.sort_unstable();

    let mut dims = vec![g.features().cols()];
    dims.extend(core::iter::repeat(cfg.hidden_dim).take(layers - 1));
    dims.push(classes);

    let screen = if cfg.restarts > 1 { cfg.screen_epochs.min(cfg.epochs) } else { 0 };
    let mut best: Option<Trainer> = None;
    for _ in 0..cfg.restarts.max(1) {
        let mut candidate = Trainer::new(initial_model(&dims, cfg.bias_init, &mut rng)?);
        candidate.run(g, &train_nodes, cfg, screen)?;
        if best.as_ref().map_or(true, |b| candidate.loss < b.loss) {
            best = Some(candidate);
        }
    }
    let mut trainer = best.expect("at least one restart");
    trainer.run(g, &train_nodes, cfg, cfg.epochs - screen)?;

    let model = trainer.model;
    let (final_loss, _) = model.loss_and_gradient(g, g.labels(), &train_nodes, cfg.weight_decay)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs, loss: final_loss });
    }
    let probs = model.forward(g)?;
    let accuracy = |set: &[usize]| {
        if set.is_empty() {
            return f64::NAN;
        }
        let hits = set.iter().filter(|&&v| argmax(probs.row(v)) == g.labels()[v]).count();
        hits as f64 / set.len() as f64
    };
    let report = TrainReport {
        train_accuracy: accuracy(&train_nodes),
        test_accuracy: accuracy(&test_nodes),
        initial_loss: trainer.initial_loss,
        final_loss,
        train_nodes,
        test_nodes,
    };
    Ok((model, report))
}

/// Largest relative error between `analytic` and central finite differences of the
/// loss over `samples` randomly chosen parameters.
///
/// Relative error is `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn compare_gradients<R: Rng + ?Sized>(
    model: &GcnModel,
    g: &LabeledGraph,
    labels: &[usize],
    nodes: &[usize],
    analytic: &Gradients,
    epsilon: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be > 0".into()));
    }
    let flat = analytic.flat();
    if flat.len() != model.param_count() {
        return Err(Error::Dimension("gradient shape does not match model".into()));
    }
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.gen_range(0..flat.len());
        let original = *probe.param_mut(i);
        *probe.param_mut(i) = original + epsilon;
        let (plus, _) = probe.loss_and_gradient(g, labels, nodes, 0.0)?;
        *probe.param_mut(i) = original - epsilon;
        let (minus, _) = probe.loss_and_gradient(g, labels, nodes, 0.0)?;
        *probe.param_mut(i) = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = flat[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((flat[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Checks the analytic cross-entropy gradient (no weight decay) on at least 50 parameters.
pub fn grad_check<R: Rng + ?Sized>(
    model: &GcnModel,
    g: &LabeledGraph,
    labels: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<f64> {
    let nodes: Vec<usize> = (0..g.n()).collect();
    let (_, grads) = model.loss_and_gradient(g, labels, &nodes, 0.0)?;
    let samples = 50.max(model.param_count().min(200));
    compare_gradients(model, g, labels, &nodes, &grads, epsilon, samples, rng)
}
