//! Undirected labeled graphs, k-hop candidate extraction and edge deletion.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashSet;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Canonical undirected edge: `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub u: usize,
    pub v: usize,
}

impl EdgeId {
    /// Canonicalizes the pair. Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loops are not edges");
        if a < b {
            Self { u: a, v: b }
        } else {
            Self { u: b, v: a }
        }
    }

    pub fn touches(&self, node: usize) -> bool {
        self.u == node || self.v == node
    }
}

/// Read access to an undirected adjacency structure with sorted neighbor lists.
///
/// The GCN kernels are generic over this so that the same arithmetic runs on the
/// full graph and on a graph with a few edges masked out.
pub trait Neighborhood {
    fn node_count(&self) -> usize;
    fn degree(&self, u: usize) -> usize;
    /// Calls `f` for every neighbor of `u` in ascending id order.
    fn for_each_neighbor<F: FnMut(usize)>(&self, u: usize, f: F);
}

/// An undirected graph with node features, class labels and ground-truth motif membership.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    n: usize,
    edges: Vec<EdgeId>,
    adjacency: Vec<Vec<usize>>,
    features: Matrix,
    labels: Vec<usize>,
    motif_nodes: Vec<usize>,
}

impl LabeledGraph {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        motif_nodes: Vec<usize>,
    ) -> Result<Self> {
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) has an endpoint >= {n}")));
            }
            canon.push(EdgeId::new(a, b));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", w[0].u, w[0].v)));
        }
        if features.rows() != n {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows, expected {n}",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidGraph(format!("{} labels for {n} nodes", labels.len())));
        }
        let mut motif_nodes = motif_nodes;
        motif_nodes.sort_unstable();
        motif_nodes.dedup();
        if motif_nodes.last().is_some_and(|&m| m >= n) {
            return Err(Error::InvalidGraph("motif node out of range".into()));
        }
        Ok(Self::from_canonical(n, canon, features, labels, motif_nodes))
    }

    fn from_canonical(
        n: usize,
        edges: Vec<EdgeId>,
        features: Matrix,
        labels: Vec<usize>,
        motif_nodes: Vec<usize>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { n, edges, adjacency, features, labels, motif_nodes }
    }

    fn with_edge_list(&self, edges: Vec<EdgeId>) -> Self {
        Self::from_canonical(
            self.n,
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.motif_nodes.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges in ascending canonical order.
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn motif_nodes(&self) -> &[usize] {
        &self.motif_nodes
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn has_edge(&self, e: EdgeId) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    /// Replaces the feature matrix (row count must stay `n`).
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.n {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows, expected {}",
                features.rows(),
                self.n
            )));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Relabels nodes: node `u` of `self` becomes node `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut features = Matrix::zeros(self.n, self.features.cols());
        let mut labels = vec![0; self.n];
        for u in 0..self.n {
            features.row_mut(perm[u]).copy_from_slice(self.features.row(u));
            labels[perm[u]] = self.labels[u];
        }
        Self::new(
            self.n,
            self.edges.iter().map(|e| (perm[e.u], perm[e.v])),
            features,
            labels,
            self.motif_nodes.iter().map(|&m| perm[m]).collect(),
        )
    }

    /// Shortest-path distances from `v`, truncated at `max_hops` (`None` beyond).
    pub fn distances_from(&self, v: usize, max_hops: usize) -> Result<Vec<Option<usize>>> {
        self.check_node(v)?;
        let mut dist = vec![None; self.n];
        dist[v] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            if d == max_hops {
                continue;
            }
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Nodes within `hops` of `v` (ascending) and the induced edges (ascending canonical order).
    pub fn khop_subgraph(&self, v: usize, hops: usize) -> Result<(Vec<usize>, Vec<EdgeId>)> {
        let dist = self.distances_from(v, hops)?;
        let nodes: Vec<usize> = (0..self.n).filter(|&u| dist[u].is_some()).collect();
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|e| dist[e.u].is_some() && dist[e.v].is_some())
            .collect();
        Ok((nodes, edges))
    }

    /// Returns a copy of the graph without the edges in `removed`.
    pub fn delete_edges(&self, removed: &[EdgeId]) -> Result<Self> {
        let mut drop: HashSet<EdgeId> = HashSet::with_capacity(removed.len());
        for &e in removed {
            if !self.has_edge(e) {
                return Err(Error::MissingEdge(e));
            }
            drop.insert(e);
        }
        let kept = self.edges.iter().copied().filter(|e| !drop.contains(e)).collect();
        Ok(self.with_edge_list(kept))
    }

    /// Returns a copy of the graph with extra edges. Edges already present are an error.
    pub fn add_edges(&self, added: &[EdgeId]) -> Result<Self> {
        let mut edges = self.edges.clone();
        for &e in added {
            if e.v >= self.n {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) out of range", e.u, e.v)));
            }
            if self.has_edge(e) {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) already present", e.u, e.v)));
            }
            edges.push(e);
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate edge in addition".into()));
        }
        Ok(self.with_edge_list(edges))
    }

    /// Adds `round(ratio * |E|)` uniformly random edges between non-adjacent node pairs.
    ///
    /// Noise edges may land anywhere, including inside motifs.
    pub fn inject_noise_edges<R: Rng + ?Sized>(&self, ratio: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!("noise ratio {ratio} not in [0, 1]")));
        }
        let count = libm::round(ratio * self.edges.len() as f64) as usize;
        let added = sample_absent_edges(self, count, rng)?;
        self.add_edges(&added)
    }

    /// Dense `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn normalized_adjacency(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for u in 0..self.n {
            let du = (self.adjacency[u].len() + 1) as f64;
            out.set(u, u, 1.0 / du);
            for &w in &self.adjacency[u] {
                let dw = (self.adjacency[w].len() + 1) as f64;
                out.set(u, w, 1.0 / libm::sqrt(du * dw));
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let dist = self.distances_from(0, usize::MAX).expect("node 0 exists");
        dist.iter().all(Option::is_some)
    }

    pub(crate) fn check_node(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: v, n: self.n })
        }
    }
}

impl Neighborhood for LabeledGraph {
    fn node_count(&self) -> usize {
        self.n
    }

    fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    fn for_each_neighbor<F: FnMut(usize)>(&self, u: usize, mut f: F) {
        for &w in &self.adjacency[u] {
            f(w);
        }
    }
}

/// The graph with a small sorted set of edges masked out, without copying it.
#[derive(Debug, Clone, Copy)]
pub struct DeletionView<'a> {
    graph: &'a LabeledGraph,
    removed: &'a [EdgeId],
}

impl<'a> DeletionView<'a> {
    /// `removed` must be sorted ascending and contain only edges of `graph`.
    pub fn new(graph: &'a LabeledGraph, removed: &'a [EdgeId]) -> Self {
        debug_assert!(removed.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(removed.iter().all(|&e| graph.has_edge(e)));
        Self { graph, removed }
    }

    #[inline]
    fn is_removed(&self, a: usize, b: usize) -> bool {
        !self.removed.is_empty() && self.removed.binary_search(&EdgeId::new(a, b)).is_ok()
    }
}

impl Neighborhood for DeletionView<'_> {
    fn node_count(&self) -> usize {
        self.graph.n
    }

    fn degree(&self, u: usize) -> usize {
        let adj = &self.graph.adjacency[u];
        let cut = if self.removed.len() <= adj.len() {
            self.removed.iter().filter(|e| e.touches(u)).count()
        } else {
            adj.iter().filter(|&&w| self.is_removed(u, w)).count()
        };
        adj.len() - cut
    }

    fn for_each_neighbor<F: FnMut(usize)>(&self, u: usize, mut f: F) {
        for &w in &self.graph.adjacency[u] {
            if !self.is_removed(u, w) {
                f(w);
            }
        }
    }
}

/// Samples `count` distinct node pairs that are neither self-loops nor existing edges.
pub(crate) fn sample_absent_edges<R: Rng + ?Sized>(
    g: &LabeledGraph,
    count: usize,
    rng: &mut R,
) -> Result<Vec<EdgeId>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let capacity = g.n * g.n.saturating_sub(1) / 2 - g.edges.len();
    let mut chosen: HashSet<EdgeId> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let max_attempts = 100 * count + 1000;
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts && out.len() < capacity {
        attempts += 1;
        let a = rng.gen_range(0..g.n);
        let b = rng.gen_range(0..g.n);
        if a == b {
            continue;
        }
        let e = EdgeId::new(a, b);
        if g.has_edge(e) || !chosen.insert(e) {
            continue;
        }
        out.push(e);
    }
    if out.len() < count {
        return Err(Error::TooDense { requested: count, placed: out.len() });
    }
    Ok(out)
}
