//! The iterative augmentation process, Monte Carlo accuracy curves, and
//! the exact per-pair probability oracle.
//!
//! One step of the process samples an ordered pair `(x, y)` uniformly from
//! the `V * (V - 1)` distinct pairs. If the source graph contains a
//! directed path from `x` to `y`, the deterministic shortest path
//! `(x, z1, .., zk, y)` is looked up and the star edges
//! `(x, z1), .., (x, zk), (x, y)` are added to the learned set; otherwise
//! the step is a no-op. Paths are always taken in the fixed source graph,
//! never in the augmented set, so the per-step pair distribution and the
//! per-pair inclusion probabilities stay constant over time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::{bfs_tree, BfsTree, DirectedGraph, Path};
use crate::Real;

/// Errors from simulation, curve handling, and exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProcessError {
    #[error("at least one replicate is required")]
    NoReplicates,
    #[error("step grid must be nonempty and strictly increasing")]
    BadStepGrid,
    #[error("graph has {vertex_count} vertices; exhaustive pair enumeration is capped at {cap}")]
    EnumerationTooLarge { vertex_count: usize, cap: usize },
    #[error("forest covers {forest_vertices} vertices, graph has {graph_vertices}")]
    ForestMismatch { forest_vertices: usize, graph_vertices: usize },
    #[error("curve columns must be nonempty, equal length, with at least one replicate")]
    BadCurveShape,
    #[error("accuracy values must lie in [0, 1] with nonnegative stderr")]
    BadCurveValues,
    #[error("malformed curve CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}

/// Dense edge-set bitmap over ordered vertex pairs, the learned relation
/// store of a running replicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    vertex_count: usize,
    bits: Vec<u64>,
    len: usize,
}

impl EdgeSet {
    pub fn new(vertex_count: usize) -> Self {
        let slots = (vertex_count * vertex_count).div_ceil(64);
        EdgeSet { vertex_count, bits: vec![0; slots], len: 0 }
    }

    /// Bitmap preloaded with the edges of `graph`.
    pub fn from_graph(graph: &DirectedGraph) -> Self {
        let mut set = Self::new(graph.vertex_count());
        for (u, v) in graph.edges() {
            set.insert(u, v);
        }
        set
    }

    fn slot(&self, u: usize, v: usize) -> (usize, u64) {
        debug_assert!(u != v && u < self.vertex_count && v < self.vertex_count);
        let index = u * self.vertex_count + v;
        (index / 64, 1u64 << (index % 64))
    }

    /// Inserts the edge; returns whether it was new.
    pub fn insert(&mut self, u: usize, v: usize) -> bool {
        let (word, mask) = self.slot(u, v);
        let new = self.bits[word] & mask == 0;
        self.bits[word] |= mask;
        self.len += new as usize;
        new
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        let (word, mask) = self.slot(u, v);
        self.bits[word] & mask != 0
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Edges in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let v = self.vertex_count;
        (0..v).flat_map(move |u| (0..v).filter(move |&w| w != u && self.contains(u, w)).map(move |w| (u, w)))
    }
}

/// Shortest-path trees from every source vertex, computed once per graph
/// and shared by all replicates.
#[derive(Debug, Clone)]
pub struct ShortestPathForest {
    trees: Vec<BfsTree>,
}

impl ShortestPathForest {
    pub fn build(graph: &DirectedGraph) -> Self {
        let trees = (0..graph.vertex_count())
            .map(|s| bfs_tree(graph, s).expect("sources are in range"))
            .collect();
        ShortestPathForest { trees }
    }

    pub fn vertex_count(&self) -> usize {
        self.trees.len()
    }

    pub fn tree(&self, source: usize) -> &BfsTree {
        &self.trees[source]
    }

    /// Deterministic shortest path, `None` when unreachable or the
    /// endpoints coincide.
    pub fn path(&self, source: usize, destination: usize) -> Option<Path> {
        self.trees[source].path_to(destination)
    }
}

/// One replicate of the augmentation process: the learned edge set after
/// some number of steps over a fixed source graph.
#[derive(Debug, Clone)]
pub struct AugmentationState<'a> {
    forest: &'a ShortestPathForest,
    learned: EdgeSet,
    steps_taken: u64,
}

impl<'a> AugmentationState<'a> {
    /// Fresh state whose learned set starts as the source edges. The
    /// forest must have been built from the same graph.
    pub fn new(
        source: &DirectedGraph,
        forest: &'a ShortestPathForest,
    ) -> Result<Self, ProcessError> {
        if forest.vertex_count() != source.vertex_count() {
            return Err(ProcessError::ForestMismatch {
                forest_vertices: forest.vertex_count(),
                graph_vertices: source.vertex_count(),
            });
        }
        Ok(AugmentationState { forest, learned: EdgeSet::from_graph(source), steps_taken: 0 })
    }

    /// Applies the deterministic effect of sampling the ordered pair
    /// `(x, y)`: adds the star of the shortest `x -> y` path, or does
    /// nothing when `y` is unreachable from `x`.
    pub fn apply_pair(&mut self, x: usize, y: usize) {
        let tree = self.forest.tree(x);
        if x == y || !tree.reaches(y) {
            return;
        }
        let mut v = y;
        while v != x {
            self.learned.insert(x, v);
            v = tree.parent(v).expect("reached vertices chain back to the source");
        }
    }

    /// Samples one ordered pair uniformly and applies it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let v = self.forest.vertex_count() as u64;
        let index = rng.random_range(0..v * (v - 1));
        let x = (index / (v - 1)) as usize;
        let mut y = (index % (v - 1)) as usize;
        if y >= x {
            y += 1;
        }
        self.apply_pair(x, y);
        self.steps_taken += 1;
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn learned_edge_count(&self) -> u64 {
        self.learned.len() as u64
    }

    pub fn learned(&self) -> &EdgeSet {
        &self.learned
    }
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Runs a single replicate for `t_max` steps and returns the learned edge
/// count after each step, index 0 holding the source edge count.
pub fn run_replicate(source: &DirectedGraph, t_max: u64, seed: u64) -> Vec<u64> {
    let forest = ShortestPathForest::build(source);
    let mut state = AugmentationState::new(source, &forest).expect("forest matches source");
    let mut rng = replicate_rng(seed, 0);
    let mut trajectory = Vec::with_capacity(t_max as usize + 1);
    trajectory.push(state.learned_edge_count());
    for _ in 0..t_max {
        state.step(&mut rng);
        trajectory.push(state.learned_edge_count());
    }
    trajectory
}

/// Link-density curve: mean learned-edge fraction over replicates at a
/// grid of step counts, with the per-point sample standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve<T = f64> {
    steps: Vec<u64>,
    mean_acc: Vec<T>,
    stderr: Vec<T>,
    replicates: u32,
}

pub const CURVE_CSV_HEADER: &str = "t,mean_acc,stderr,replicates";

impl<T: Real> AccuracyCurve<T> {
    pub fn new(
        steps: Vec<u64>,
        mean_acc: Vec<T>,
        stderr: Vec<T>,
        replicates: u32,
    ) -> Result<Self, ProcessError> {
        if steps.is_empty()
            || steps.len() != mean_acc.len()
            || steps.len() != stderr.len()
            || replicates == 0
        {
            return Err(ProcessError::BadCurveShape);
        }
        if !steps.windows(2).all(|w| w[0] < w[1]) {
            return Err(ProcessError::BadStepGrid);
        }
        let slack = T::from_f64_lossy(1e-12);
        let in_range = |a: &T| *a >= -slack && *a <= T::one() + slack;
        if !(mean_acc.iter().all(in_range) && stderr.iter().all(|s| *s >= T::zero())) {
            return Err(ProcessError::BadCurveValues);
        }
        let clamp = |a: T| a.max(T::zero()).min(T::one());
        Ok(AccuracyCurve {
            steps,
            mean_acc: mean_acc.into_iter().map(clamp).collect(),
            stderr,
            replicates,
        })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn mean_acc(&self) -> &[T] {
        &self.mean_acc
    }

    pub fn stderr(&self) -> &[T] {
        &self.stderr
    }

    pub fn replicates(&self) -> u32 {
        self.replicates
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(t, mean, stderr)` triples in grid order.
    pub fn points(&self) -> impl Iterator<Item = (u64, T, T)> + '_ {
        (0..self.len()).map(move |i| (self.steps[i], self.mean_acc[i], self.stderr[i]))
    }

    /// Renders the stable CSV form. Floats use the shortest round-trip
    /// representation, so equal curves produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.steps[i], self.mean_acc[i], self.stderr[i], self.replicates
            )
            .expect("string writes cannot fail");
        }
        out
    }

    /// Parses the CSV form produced by [`AccuracyCurve::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, ProcessError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == CURVE_CSV_HEADER => {}
            _ => {
                return Err(ProcessError::MalformedCsv {
                    line: 1,
                    reason: format!("expected header {CURVE_CSV_HEADER:?}"),
                })
            }
        }
        let mut steps = Vec::new();
        let mut mean_acc = Vec::new();
        let mut stderr = Vec::new();
        let mut replicates: Option<u32> = None;
        for (index, line) in lines {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| ProcessError::MalformedCsv {
                line: index + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 comma-separated fields"));
            }
            steps.push(fields[0].parse::<u64>().map_err(|_| bad("bad step count"))?);
            let mean: f64 = fields[1].parse().map_err(|_| bad("bad mean_acc"))?;
            let se: f64 = fields[2].parse().map_err(|_| bad("bad stderr"))?;
            mean_acc.push(T::from_f64_lossy(mean));
            stderr.push(T::from_f64_lossy(se));
            let reps: u32 = fields[3].parse().map_err(|_| bad("bad replicates"))?;
            if *replicates.get_or_insert(reps) != reps {
                return Err(bad("replicates column is not constant"));
            }
        }
        Self::new(steps, mean_acc, stderr, replicates.unwrap_or(0))
    }
}

fn validate_grid(step_grid: &[u64]) -> Result<(), ProcessError> {
    if step_grid.is_empty() || !step_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(ProcessError::BadStepGrid);
    }
    Ok(())
}

/// Monte Carlo estimate of the accuracy curve on `step_grid`.
///
/// Replicates run in parallel, each on its own counter-mode RNG stream
/// derived from `seed`, so results are independent of thread scheduling
/// and identical across runs.
pub fn estimate_acc_curve<T: Real>(
    source: &DirectedGraph,
    step_grid: &[u64],
    replicates: u32,
    seed: u64,
) -> Result<AccuracyCurve<T>, ProcessError> {
    validate_grid(step_grid)?;
    if replicates == 0 {
        return Err(ProcessError::NoReplicates);
    }
    let forest = ShortestPathForest::build(source);
    let per_replicate: Vec<Vec<u64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut state =
                AugmentationState::new(source, &forest).expect("forest matches source");
            let mut counts = Vec::with_capacity(step_grid.len());
            let mut t = 0u64;
            for &stop in step_grid {
                while t < stop {
                    state.step(&mut rng);
                    t += 1;
                }
                counts.push(state.learned_edge_count());
            }
            counts
        })
        .collect();

    let pair_count = T::from_count(source.ordered_pair_count());
    let n = T::from_count(replicates as u64);
    let mut mean_acc = Vec::with_capacity(step_grid.len());
    let mut stderr = Vec::with_capacity(step_grid.len());
    for i in 0..step_grid.len() {
        let total: u64 = per_replicate.iter().map(|c| c[i]).sum();
        let mean_count = T::from_count(total) / n;
        let se = if replicates > 1 {
            let ss: T = per_replicate
                .iter()
                .map(|c| {
                    let d = T::from_count(c[i]) - mean_count;
                    d * d
                })
                .sum();
            (ss / (n - T::one()) / n).sqrt() / pair_count
        } else {
            T::zero()
        };
        mean_acc.push(mean_count / pair_count);
        stderr.push(se);
    }
    AccuracyCurve::new(step_grid.to_vec(), mean_acc, stderr, replicates)
}

/// Largest vertex count accepted by the exhaustive pair enumeration
/// without an explicit override.
pub const DEFAULT_ENUMERATION_CAP: usize = 64;

/// Per-pair star-membership counts: for each ordered pair `(i, j)`, the
/// number of sampled pairs `(a, b)` whose star contains the edge
/// `(i, j)`. Dividing by `V * (V - 1)` gives the per-step inclusion
/// probability `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairProbabilities {
    counts: BTreeMap<(usize, usize), u64>,
    pair_count: u64,
}

impl PairProbabilities {
    pub fn pair_count(&self) -> u64 {
        self.pair_count
    }

    /// How many sampled pairs add `(i, j)`; zero off the support.
    pub fn star_count(&self, i: usize, j: usize) -> u64 {
        self.counts.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Per-step inclusion probability `q = star_count / (V * (V - 1))`.
    pub fn q<T: Real>(&self, i: usize, j: usize) -> T {
        T::from_count(self.star_count(i, j)) / T::from_count(self.pair_count)
    }

    /// Pairs with positive probability, in lexicographic order.
    pub fn support(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.counts.iter().map(|(&pair, &count)| (pair, count))
    }

    pub fn support_len(&self) -> usize {
        self.counts.len()
    }
}

/// Exhaustive star enumeration with the default size cap.
pub fn pair_probabilities(source: &DirectedGraph) -> Result<PairProbabilities, ProcessError> {
    pair_probabilities_with_cap(source, DEFAULT_ENUMERATION_CAP)
}

/// Exhaustive star enumeration for graphs up to `cap` vertices. Raising
/// the cap past the default is allowed but logs a warning since the walk
/// touches all `V * (V - 1)` pairs.
pub fn pair_probabilities_with_cap(
    source: &DirectedGraph,
    cap: usize,
) -> Result<PairProbabilities, ProcessError> {
    let v = source.vertex_count();
    if v > cap {
        return Err(ProcessError::EnumerationTooLarge { vertex_count: v, cap });
    }
    if v > DEFAULT_ENUMERATION_CAP {
        log::warn!(
            "exhaustive pair enumeration over {v} vertices; \
             cost grows with V^2 times path length"
        );
    }
    let forest = ShortestPathForest::build(source);
    let mut counts = BTreeMap::new();
    for x in 0..v {
        let tree = forest.tree(x);
        for y in 0..v {
            if y == x || !tree.reaches(y) {
                continue;
            }
            let mut node = y;
            while node != x {
                *counts.entry((x, node)).or_insert(0) += 1;
                node = tree.parent(node).expect("reached vertices chain back to the source");
            }
        }
    }
    Ok(PairProbabilities { counts, pair_count: source.ordered_pair_count() })
}

/// Exact expected accuracy curve via the per-pair probabilities, using
/// the default enumeration cap.
pub fn exact_acc_curve<T: Real>(
    source: &DirectedGraph,
    step_grid: &[u64],
) -> Result<AccuracyCurve<T>, ProcessError> {
    exact_acc_curve_with_cap(source, step_grid, DEFAULT_ENUMERATION_CAP)
}

/// Exact expected accuracy curve with an explicit enumeration cap.
///
/// Each pair `(i, j)` off the source set contributes
/// `1 - (1 - q)^t` at step `t`; source edges are present from the start.
/// The curve is deterministic, so stderr is zero and replicates is one.
pub fn exact_acc_curve_with_cap<T: Real>(
    source: &DirectedGraph,
    step_grid: &[u64],
    cap: usize,
) -> Result<AccuracyCurve<T>, ProcessError> {
    validate_grid(step_grid)?;
    let probs = pair_probabilities_with_cap(source, cap)?;
    let pair_count = T::from_count(probs.pair_count());
    let terms: Vec<T> = probs
        .support()
        .filter(|&((i, j), _)| !source.has_edge(i, j))
        .map(|(_, count)| T::from_count(count) / pair_count)
        .collect();
    let base = T::from_count(source.edge_count() as u64);
    let mean_acc: Vec<T> = step_grid
        .iter()
        .map(|&t| {
            let t = T::from_count(t);
            let grown: T = terms.iter().map(|&q| T::one() - (T::one() - q).powf(t)).sum();
            (base + grown) / pair_count
        })
        .collect();
    let stderr = vec![T::zero(); step_grid.len()];
    AccuracyCurve::new(step_grid.to_vec(), mean_acc, stderr, 1)
}

/// Log-spaced step grid: zero followed by `points - 1` rounded,
/// deduplicated values from 1 to `t_max`.
pub fn log_step_grid(t_max: u64, points: usize) -> Vec<u64> {
    if t_max == 0 || points < 2 {
        return vec![0];
    }
    let mut grid = vec![0u64];
    let interior = points - 1;
    let top = (t_max as f64).ln();
    for i in 0..interior {
        let frac = if interior == 1 { 1.0 } else { i as f64 / (interior - 1) as f64 };
        let t = (top * frac).exp().round() as u64;
        grid.push(t.clamp(1, t_max));
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}
