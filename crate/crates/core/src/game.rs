//! Cooperative games over candidate edges.
//!
//! A [`Game`] maps coalitions (bitsets over an ordered player list) to real utilities.
//! [`EdgeGame`] is the explanation game: the players are the edges around a target
//! node and the utility of a coalition is the drop in the predicted-class probability
//! when those edges are deleted.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use hashbrown::HashMap;
use spin::Mutex;

use crate::error::{Error, Result};
use crate::gcn::{argmax, ForwardScratch, GcnModel};
use crate::graph::{DeletionView, EdgeId, LabeledGraph};

/// A set of players, stored as a bitset over player indices. Games with at most 64
/// players never touch the heap.
#[derive(Debug, Clone, Eq, PartialOrd, Ord)]
pub struct Coalition {
    low: u64,
    high: Vec<u64>,
}

impl PartialEq for Coalition {
    fn eq(&self, other: &Self) -> bool {
        // element-wise: slice equality goes through memcmp, which is slow for tiny keys
        self.low == other.low
            && self.high.len() == other.high.len()
            && self.high.iter().zip(&other.high).all(|(a, b)| a == b)
    }
}

impl core::hash::Hash for Coalition {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        // word count is fixed by the player count, so no length prefix
        for w in self.words() {
            state.write_u64(w);
        }
    }
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self { low: 0, high: vec![0; n.div_ceil(64).saturating_sub(1)] }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for i in 0..n {
            c.insert(i);
        }
        c
    }

    pub fn from_members(n: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::empty(n);
        for i in members {
            c.insert(i);
        }
        c
    }

    /// Coalition of the low `n` bits of `mask`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut c = Self::empty(n);
        c.low = mask;
        c
    }

    /// The first 64 membership bits.
    pub fn mask(&self) -> u64 {
        self.low
    }

    #[inline]
    fn word(&self, k: usize) -> u64 {
        if k == 0 {
            self.low
        } else {
            self.high[k - 1]
        }
    }

    #[inline]
    fn word_mut(&mut self, k: usize) -> &mut u64 {
        if k == 0 {
            &mut self.low
        } else {
            &mut self.high[k - 1]
        }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.word(i / 64) >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        *self.word_mut(i / 64) |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        *self.word_mut(i / 64) &= !(1 << (i % 64));
    }

    pub fn with(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.insert(i);
        c
    }

    pub fn len(&self) -> usize {
        self.words().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words().all(|w| w == 0)
    }

    /// Whether every member of `self` is in `other` (same player count).
    pub fn is_subset(&self, other: &Coalition) -> bool {
        self.low & !other.low == 0 && self.high.iter().zip(&other.high).all(|(a, b)| a & !b == 0)
    }

    fn words(&self) -> impl Iterator<Item = u64> + '_ {
        core::iter::once(self.low).chain(self.high.iter().copied())
    }

    /// Members in ascending order.
    pub fn members(&self) -> Members<'_> {
        Members { coalition: self, word: 0, rest: self.low }
    }
}

pub struct Members<'a> {
    coalition: &'a Coalition,
    word: usize,
    rest: u64,
}

impl Iterator for Members<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        while self.rest == 0 {
            if self.word >= self.coalition.high.len() {
                return None;
            }
            self.rest = self.coalition.high[self.word];
            self.word += 1;
        }
        let bit = self.rest.trailing_zeros() as usize;
        self.rest &= self.rest - 1;
        Some(self.word * 64 + bit)
    }
}

/// A cooperative game with `player_count()` players.
pub trait Game {
    fn player_count(&self) -> usize;

    fn value(&self, coalition: &Coalition) -> f64;

    /// Scale used by ratio thresholds; for explanation games this is `Φ(G, v, c)`.
    fn reference_value(&self) -> f64 {
        1.0
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        (**self).value(coalition)
    }

    fn reference_value(&self) -> f64 {
        (**self).reference_value()
    }
}

/// A game given by its full utility table, indexed by coalition bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGame {
    n: usize,
    values: Vec<f64>,
}

impl TabulatedGame {
    pub const MAX_PLAYERS: usize = 24;

    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > Self::MAX_PLAYERS {
            return Err(Error::TooManyPlayers { players: n, limit: Self::MAX_PLAYERS });
        }
        if values.len() != 1 << n {
            return Err(Error::Dimension(alloc::format!(
                "a {n}-player table needs {} entries, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(u64) -> f64) -> Result<Self> {
        if n > Self::MAX_PLAYERS {
            return Err(Error::TooManyPlayers { players: n, limit: Self::MAX_PLAYERS });
        }
        Self::new(n, (0..1u64 << n).map(f).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, values: self.values.iter().map(|&x| f(x)).collect() }
    }
}

impl Game for TabulatedGame {
    fn player_count(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        self.values[coalition.mask() as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    None,
    /// `max(U - b·Φ(G,v,c), 0)`.
    Hinge,
    /// `max(U - b, 0)` with a constant offset.
    FixedHinge,
    /// Keep `U` when `U / Φ(G,v,c) >= b`, otherwise the coalition is pruned.
    PruneRatio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    pub b: f64,
}

/// Result of passing a utility through a threshold policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thresholded {
    Value(f64),
    Pruned,
}

impl Thresholded {
    /// Pruned coalitions contribute zero utility.
    pub fn value_or_zero(self) -> f64 {
        match self {
            Thresholded::Value(v) => v,
            Thresholded::Pruned => 0.0,
        }
    }
}

impl ThresholdPolicy {
    pub const NONE: Self = Self { mode: ThresholdMode::None, b: 0.0 };

    pub fn hinge(b: f64) -> Self {
        Self { mode: ThresholdMode::Hinge, b }
    }

    pub fn fixed_hinge(b: f64) -> Self {
        Self { mode: ThresholdMode::FixedHinge, b }
    }

    pub fn prune_ratio(b: f64) -> Self {
        Self { mode: ThresholdMode::PruneRatio, b }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("threshold b = {} must be >= 0", self.b)));
        }
        Ok(())
    }

    pub fn prunes(&self) -> bool {
        self.mode == ThresholdMode::PruneRatio
    }

    pub fn apply(&self, utility: f64, reference: f64) -> Thresholded {
        match self.mode {
            ThresholdMode::None => Thresholded::Value(utility),
            ThresholdMode::Hinge => Thresholded::Value((utility - self.b * reference).max(0.0)),
            ThresholdMode::FixedHinge => Thresholded::Value((utility - self.b).max(0.0)),
            ThresholdMode::PruneRatio => {
                if utility / reference >= self.b {
                    Thresholded::Value(utility)
                } else {
                    Thresholded::Pruned
                }
            }
        }
    }
}

/// The explanation game for one target node.
///
/// Utility evaluations are memoized on the coalition; `evaluations()` counts classifier
/// forward passes, so repeated coalitions are free.
/// Games with at most this many players memoize into a flat table indexed by mask.
const DENSE_MEMO_PLAYERS: usize = 12;
/// NaN bit pattern never produced by the utility arithmetic.
const UNSET: u64 = u64::MAX;

enum Memo {
    Dense(Vec<AtomicU64>),
    Sparse(Mutex<HashMap<Coalition, f64>>),
}

impl Memo {
    fn for_players(n: usize) -> Self {
        if n <= DENSE_MEMO_PLAYERS {
            Memo::Dense((0..1usize << n).map(|_| AtomicU64::new(UNSET)).collect())
        } else {
            Memo::Sparse(Mutex::new(HashMap::new()))
        }
    }

    #[inline]
    fn get(&self, c: &Coalition) -> Option<f64> {
        match self {
            Memo::Dense(t) => match t[c.mask() as usize].load(Ordering::Relaxed) {
                UNSET => None,
                bits => Some(f64::from_bits(bits)),
            },
            Memo::Sparse(m) => m.lock().get(c).copied(),
        }
    }

    fn insert(&self, c: &Coalition, u: f64) {
        match self {
            Memo::Dense(t) => t[c.mask() as usize].store(u.to_bits(), Ordering::Relaxed),
            Memo::Sparse(m) => {
                m.lock().insert(c.clone(), u);
            }
        }
    }
}

impl core::fmt::Debug for Memo {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Memo::Dense(t) => write!(f, "Dense({} slots)", t.len()),
            Memo::Sparse(m) => write!(f, "Sparse({} entries)", m.lock().len()),
        }
    }
}

pub struct EdgeGame<'a> {
    graph: &'a LabeledGraph,
    model: &'a GcnModel,
    target: usize,
    original_class: usize,
    players: Vec<EdgeId>,
    base_prob: f64,
    memo: Memo,
    scratch: Mutex<ForwardScratch>,
    evaluations: AtomicUsize,
}

impl<'a> EdgeGame<'a> {
    /// Players are the edges of the `hops`-hop induced subgraph around `target`
    /// (default: the model's layer count).
    pub fn new(
        graph: &'a LabeledGraph,
        model: &'a GcnModel,
        target: usize,
        hops: Option<usize>,
    ) -> Result<Self> {
        let hops = hops.unwrap_or(model.layer_count());
        let (_, players) = graph.khop_subgraph(target, hops)?;
        if players.is_empty() {
            return Err(Error::NoCandidates(target));
        }
        let probs = model.node_probabilities(graph, target)?;
        let original_class = argmax(&probs);
        let n = players.len();
        Ok(Self {
            graph,
            model,
            target,
            original_class,
            players,
            base_prob: probs[original_class],
            memo: Memo::for_players(n),
            scratch: Mutex::new(ForwardScratch::default()),
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn graph(&self) -> &'a LabeledGraph {
        self.graph
    }

    pub fn model(&self) -> &'a GcnModel {
        self.model
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn original_class(&self) -> usize {
        self.original_class
    }

    /// Candidate edges in ascending canonical order; player `i` is `players()[i]`.
    pub fn players(&self) -> &[EdgeId] {
        &self.players
    }

    pub fn base_prob(&self) -> f64 {
        self.base_prob
    }

    /// Number of classifier evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn coalition_of(&self, edges: &[EdgeId]) -> Result<Coalition> {
        let mut c = Coalition::empty(self.players.len());
        for e in edges {
            let i = self.players.binary_search(e).map_err(|_| Error::NotAPlayer(*e))?;
            c.insert(i);
        }
        Ok(c)
    }

    pub fn edges_of(&self, coalition: &Coalition) -> Vec<EdgeId> {
        coalition.members().map(|i| self.players[i]).collect()
    }

    /// `Φ(G, v, ·)` after deleting `edges` (sorted, all players).
    pub fn probabilities_without(&self, coalition: &Coalition) -> Vec<f64> {
        let removed = self.edges_of(coalition);
        let view = DeletionView::new(self.graph, &removed);
        let features = self.graph.features();
        match self.scratch.try_lock() {
            Some(mut scratch) => self.model.node_probabilities_with(&view, features, self.target, &mut scratch),
            None => self.model.node_probabilities_on(&view, features, self.target),
        }
    }

    /// `U(S) = Φ(G,v,c) − Φ(G∖S,v,c)`.
    pub fn utility(&self, edges: &[EdgeId]) -> Result<f64> {
        let c = self.coalition_of(edges)?;
        Ok(self.value(&c))
    }

    pub fn thresholded_utility(&self, edges: &[EdgeId], policy: &ThresholdPolicy) -> Result<Thresholded> {
        let u = self.utility(edges)?;
        Ok(policy.apply(u, self.base_prob))
    }

    #[inline(never)]
    fn evaluate(&self, coalition: &Coalition) -> f64 {
        let p = self.probabilities_without(coalition)[self.original_class];
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let u = self.base_prob - p;
        self.memo.insert(coalition, u);
        u
    }

    /// Whether deleting the coalition changes the predicted class.
    pub fn flips(&self, coalition: &Coalition) -> bool {
        argmax(&self.probabilities_without(coalition)) != self.original_class
    }
}

impl Game for EdgeGame<'_> {
    fn player_count(&self) -> usize {
        self.players.len()
    }

    #[inline]
    fn value(&self, coalition: &Coalition) -> f64 {
        if coalition.is_empty() {
            return 0.0;
        }
        match self.memo.get(coalition) {
            Some(u) => u,
            None => self.evaluate(coalition),
        }
    }

    fn reference_value(&self) -> f64 {
        self.base_prob
    }
}
