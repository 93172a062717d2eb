//! Synthetic node-classification benchmarks: a base graph with planted motifs.
//!
//! Every motif is attached to a uniformly random base node by exactly one edge, from
//! the motif's first node. Extra random edges are added after all motifs are attached.

use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{sample_absent_edges, EdgeId, LabeledGraph};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    BaShapes,
    TreeCycles,
    TreeGrid,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::BaShapes => "ba-shapes",
            DatasetKind::TreeCycles => "tree-cycles",
            DatasetKind::TreeGrid => "tree-grid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ba-shapes" | "bashapes" => Some(DatasetKind::BaShapes),
            "tree-cycles" | "treecycles" => Some(DatasetKind::TreeCycles),
            "tree-grid" | "tree-grids" | "treegrid" => Some(DatasetKind::TreeGrid),
            _ => None,
        }
    }

    /// Layer count of the GCN conventionally used on this benchmark.
    pub fn default_layers(self) -> usize {
        match self {
            DatasetKind::BaShapes => 3,
            DatasetKind::TreeCycles | DatasetKind::TreeGrid => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub base_size: usize,
    pub motif_count: usize,
    /// Extra random edges as a fraction of the final node count.
    pub extra_edge_fraction: f64,
    pub feature_dim: usize,
    /// Preferential-attachment degree (BA base only).
    pub ba_attachment: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn defaults(kind: DatasetKind, seed: u64) -> Self {
        let (base_size, motif_count) = match kind {
            DatasetKind::BaShapes => (300, 80),
            DatasetKind::TreeCycles => (511, 60),
            DatasetKind::TreeGrid => (511, 80),
        };
        Self {
            kind,
            base_size,
            motif_count,
            extra_edge_fraction: 0.1,
            feature_dim: 10,
            ba_attachment: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_size == 0 {
            return Err(Error::InvalidArgument("base_size must be >= 1".into()));
        }
        if !(self.extra_edge_fraction >= 0.0) {
            return Err(Error::InvalidArgument("extra_edge_fraction must be >= 0".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be >= 1".into()));
        }
        Ok(())
    }
}

struct Motif {
    size: usize,
    edges: &'static [(usize, usize)],
    labels: &'static [usize],
}

// Nodes: 0, 1 bottom; 2, 3 middle; 4 top. Attached through node 0.
const HOUSE: Motif = Motif {
    size: 5,
    edges: &[(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 4)],
    labels: &[3, 3, 2, 2, 1],
};

const CYCLE: Motif = Motif {
    size: 6,
    edges: &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
    labels: &[1; 6],
};

// Row-major 3x3 grid.
const GRID: Motif = Motif {
    size: 9,
    edges: &[
        (0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8),
        (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8),
    ],
    labels: &[1; 9],
};

/// Generates the benchmark graph described by `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &DatasetSpec) -> Result<LabeledGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut edges, motif) = match spec.kind {
        DatasetKind::BaShapes => {
            let m = spec.ba_attachment.min(spec.base_size.saturating_sub(1)).max(1);
            let base = if spec.base_size == 1 {
                Vec::new()
            } else {
                barabasi_albert(spec.base_size, m, &mut rng)?
            };
            (base, &HOUSE)
        }
        DatasetKind::TreeCycles => (balanced_binary_tree(spec.base_size), &CYCLE),
        DatasetKind::TreeGrid => (balanced_binary_tree(spec.base_size), &GRID),
    };

    let n = spec.base_size + spec.motif_count * motif.size;
    let mut labels = vec![0usize; n];
    let mut motif_nodes = Vec::with_capacity(spec.motif_count * motif.size);
    for k in 0..spec.motif_count {
        let offset = spec.base_size + k * motif.size;
        for (i, &label) in motif.labels.iter().enumerate() {
            labels[offset + i] = label;
            motif_nodes.push(offset + i);
        }
        edges.extend(motif.edges.iter().map(|&(a, b)| EdgeId::new(offset + a, offset + b)));
        let anchor = rng.gen_range(0..spec.base_size);
        edges.push(EdgeId::new(anchor, offset));
    }

    let features = Matrix::filled(n, spec.feature_dim, 1.0);
    let g = LabeledGraph::new(n, edges.iter().map(|e| (e.u, e.v)), features, labels, motif_nodes)?;
    let extra = libm::round(spec.extra_edge_fraction * n as f64) as usize;
    let added = sample_absent_edges(&g, extra, &mut rng)?;
    g.add_edges(&added)
}

/// Preferential attachment on `n` nodes.
///
/// Seed: a clique on the first `m` nodes (`m(m-1)/2` edges). Each later node attaches to
/// `m` distinct earlier nodes drawn proportionally to degree, giving
/// `m(m-1)/2 + (n-m)m` edges in total. With `m = 1` the seed is a single node and the
/// first attachment is forced.
pub fn barabasi_albert<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<EdgeId>> {
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(alloc::format!(
            "attachment degree m={m} must satisfy 1 <= m < n={n}"
        )));
    }
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // Each node appears once per incident edge end.
    let mut ends: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for a in 0..m {
        for b in a + 1..m {
            edges.push(EdgeId::new(a, b));
            ends.push(a);
            ends.push(b);
        }
    }
    let mut targets: HashSet<usize> = HashSet::with_capacity(m);
    let mut picked = Vec::with_capacity(m);
    for new in m..n {
        targets.clear();
        picked.clear();
        while picked.len() < m {
            let t = if ends.is_empty() { rng.gen_range(0..new) } else { *ends.choose(rng).unwrap() };
            if targets.insert(t) {
                picked.push(t);
            }
        }
        for &t in &picked {
            edges.push(EdgeId::new(t, new));
            ends.push(t);
            ends.push(new);
        }
    }
    edges.sort_unstable();
    debug_assert!(edges.windows(2).all(|w| w[0] != w[1]));
    Ok(edges)
}

/// Heap-ordered binary tree: node `i` has children `2i+1` and `2i+2`.
pub fn balanced_binary_tree(n: usize) -> Vec<EdgeId> {
    (1..n).map(|c| EdgeId::new((c - 1) / 2, c)).collect()
}
