//! Directed graphs, Erdos-Renyi generation, and deterministic
//! shortest-path queries.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Real;

/// Errors from graph construction, parameter validation, and path queries.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    NoVertices,
    #[error("model needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {vertex} out of range for {vertex_count} vertices")]
    VertexOutOfRange { vertex: usize, vertex_count: usize },
    #[error("self loop at vertex {0} is not allowed")]
    SelfLoop(usize),
    #[error("path query needs distinct endpoints, got {0} twice")]
    EqualEndpoints(usize),
    #[error("lambda must be nonnegative and finite, got {0}")]
    BadLambda(f64),
    #[error("edge probability must lie in [0, 1], got {0}")]
    BadEdgeProbability(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("malformed graph JSON: {0}")]
    MalformedJson(String),
}

/// Directed graph on vertices `0..vertex_count` with no self loops and no
/// parallel edges.
///
/// Adjacency lists are kept sorted ascending, so every traversal in this
/// crate visits neighbors in a fixed order and seeded computations built
/// on top are reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    neighbors: Vec<Vec<usize>>,
    edge_count: usize,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    v: usize,
    edges: Vec<(usize, usize)>,
}

impl DirectedGraph {
    /// Graph with `vertex_count` vertices and no edges.
    pub fn empty(vertex_count: usize) -> Result<Self, GraphError> {
        if vertex_count == 0 {
            return Err(GraphError::NoVertices);
        }
        Ok(DirectedGraph { neighbors: vec![Vec::new(); vertex_count], edge_count: 0 })
    }

    /// Builds a graph from an edge list. Duplicate edges collapse;
    /// self loops and out-of-range endpoints are rejected.
    pub fn new(
        vertex_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut graph = Self::empty(vertex_count)?;
        for (u, v) in edges {
            graph.check_vertex(u)?;
            graph.check_vertex(v)?;
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            graph.neighbors[u].push(v);
        }
        for list in &mut graph.neighbors {
            list.sort_unstable();
            list.dedup();
            graph.edge_count += list.len();
        }
        Ok(graph)
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.vertex_count() {
            return Err(GraphError::VertexOutOfRange { vertex: v, vertex_count: self.vertex_count() });
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Number of ordered vertex pairs `(i, j)` with `i != j`, the
    /// denominator of every link-density figure.
    pub fn ordered_pair_count(&self) -> u64 {
        let v = self.vertex_count() as u64;
        v * (v - 1)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.vertex_count() && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Out-neighbors of `u` in ascending order.
    pub fn out_neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&v| (u, v)))
    }

    /// Serializes to the stable JSON form
    /// `{"v": N, "edges": [[u, v], ...]}` with edges sorted
    /// lexicographically, so equal graphs produce identical bytes.
    pub fn to_json(&self) -> String {
        let repr = GraphRepr { v: self.vertex_count(), edges: self.edges().collect() };
        serde_json::to_string(&repr).expect("graph serialization cannot fail")
    }

    /// Parses the JSON form produced by [`DirectedGraph::to_json`],
    /// revalidating every edge.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let repr: GraphRepr =
            serde_json::from_str(text).map_err(|e| GraphError::MalformedJson(e.to_string()))?;
        Self::new(repr.v, repr.edges)
    }
}

/// Parameters of the augmentation model: `V` entities, an Erdos-Renyi
/// source graph with edge probability `p = lambda / V`, and the slack
/// `epsilon` used by the closed-form accuracy bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T = f64> {
    vertex_count: usize,
    lambda: T,
    edge_probability: T,
    epsilon: T,
}

impl<T: Real> ModelParams<T> {
    /// Parameters from the mean out-degree `lambda`; the edge probability
    /// is `lambda / V` and must land in `[0, 1]`.
    pub fn new(vertex_count: usize, lambda: T, epsilon: T) -> Result<Self, GraphError> {
        if vertex_count < 2 {
            return Err(GraphError::TooFewVertices(vertex_count));
        }
        if !(lambda.is_finite() && lambda >= T::zero()) {
            return Err(GraphError::BadLambda(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        let p = lambda / T::from_count(vertex_count as u64);
        if p > T::one() {
            return Err(GraphError::BadEdgeProbability(p.to_f64().unwrap_or(f64::NAN)));
        }
        if !(epsilon.is_finite() && epsilon > T::zero()) {
            return Err(GraphError::BadEpsilon(epsilon.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(ModelParams { vertex_count, lambda, edge_probability: p, epsilon })
    }

    /// Parameters from the edge probability directly; `lambda = p * V`.
    pub fn from_edge_probability(
        vertex_count: usize,
        edge_probability: T,
        epsilon: T,
    ) -> Result<Self, GraphError> {
        if !(edge_probability.is_finite()
            && edge_probability >= T::zero()
            && edge_probability <= T::one())
        {
            return Err(GraphError::BadEdgeProbability(
                edge_probability.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if vertex_count < 2 {
            return Err(GraphError::TooFewVertices(vertex_count));
        }
        let lambda = edge_probability * T::from_count(vertex_count as u64);
        Self::new(vertex_count, lambda, epsilon)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn edge_probability(&self) -> T {
        self.edge_probability
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn ordered_pair_count(&self) -> u64 {
        let v = self.vertex_count as u64;
        v * (v - 1)
    }
}

/// Simple directed path from a shortest-path query. The vertex list runs
/// from source to destination; the path length is `edge_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    vertices: Vec<usize>,
}

impl Path {
    pub(crate) fn from_vertices(vertices: Vec<usize>) -> Self {
        debug_assert!(vertices.len() >= 2);
        Path { vertices }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn source(&self) -> usize {
        self.vertices[0]
    }

    pub fn destination(&self) -> usize {
        *self.vertices.last().expect("paths are nonempty")
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Vertices strictly between source and destination.
    pub fn interior(&self) -> &[usize] {
        &self.vertices[1..self.vertices.len() - 1]
    }
}

/// Breadth-first shortest-path tree from one source.
///
/// Ties are broken deterministically: each level of the frontier is
/// expanded in ascending vertex order over sorted adjacency lists, so a
/// reached vertex records the smallest eligible predecessor on the
/// earliest possible level.
#[derive(Debug, Clone)]
pub struct BfsTree {
    source: usize,
    parent: Vec<usize>,
}

const UNREACHED: usize = usize::MAX;

impl BfsTree {
    pub fn source(&self) -> usize {
        self.source
    }

    /// Whether `v` is reachable from the source (the source counts).
    pub fn reaches(&self, v: usize) -> bool {
        v < self.parent.len() && self.parent[v] != UNREACHED
    }

    /// Predecessor of `v` on its shortest path, if `v` was reached and is
    /// not the source itself.
    pub fn parent(&self, v: usize) -> Option<usize> {
        if v == self.source || !self.reaches(v) {
            None
        } else {
            Some(self.parent[v])
        }
    }

    /// Shortest path from the source to `destination`, or `None` when
    /// unreachable. The destination must differ from the source.
    pub fn path_to(&self, destination: usize) -> Option<Path> {
        if destination == self.source || !self.reaches(destination) {
            return None;
        }
        let mut vertices = vec![destination];
        let mut v = destination;
        while v != self.source {
            v = self.parent[v];
            vertices.push(v);
        }
        vertices.reverse();
        Some(Path::from_vertices(vertices))
    }
}

/// Breadth-first search from `source` with the deterministic tie-break
/// described on [`BfsTree`].
pub fn bfs_tree(graph: &DirectedGraph, source: usize) -> Result<BfsTree, GraphError> {
    graph.check_vertex(source)?;
    let mut parent = vec![UNREACHED; graph.vertex_count()];
    parent[source] = source;
    let mut frontier = vec![source];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in graph.out_neighbors(u) {
                if parent[v] == UNREACHED {
                    parent[v] = u;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    Ok(BfsTree { source, parent })
}

/// Deterministic shortest path between two distinct vertices, or
/// `Ok(None)` when no directed path exists.
pub fn bfs_shortest_path(
    graph: &DirectedGraph,
    source: usize,
    destination: usize,
) -> Result<Option<Path>, GraphError> {
    graph.check_vertex(destination)?;
    if source == destination {
        return Err(GraphError::EqualEndpoints(source));
    }
    Ok(bfs_tree(graph, source)?.path_to(destination))
}

/// All ordered pairs `(i, j)` with `i != j` joined by a directed path of
/// length at least one. Exhaustive per-source DFS; quadratic memory in the
/// worst case, intended for analysis-sized graphs.
pub fn reachability_closure(graph: &DirectedGraph) -> BTreeSet<(usize, usize)> {
    let v = graph.vertex_count();
    let mut closure = BTreeSet::new();
    let mut seen = vec![false; v];
    let mut stack = Vec::new();
    for s in 0..v {
        seen.fill(false);
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &w in graph.out_neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    closure.insert((s, w));
                    stack.push(w);
                }
            }
        }
    }
    closure
}

/// Samples the Erdos-Renyi source graph: every ordered pair `(u, w)` with
/// `u != w` gets an edge independently with probability `p`. The Bernoulli
/// sweep runs in row-major order from one `ChaCha8` stream seeded with
/// `seed`, so the draw is reproducible across runs and platforms.
pub fn generate_er<T: Real>(params: &ModelParams<T>, seed: u64) -> DirectedGraph {
    let v = params.vertex_count();
    let p = params.edge_probability().to_f64().expect("probability fits in f64");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); v];
    let mut edge_count = 0;
    for (u, row) in neighbors.iter_mut().enumerate() {
        for w in 0..v {
            if u != w && rng.random::<f64>() < p {
                row.push(w);
                edge_count += 1;
            }
        }
    }
    DirectedGraph { neighbors, edge_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(n: usize) -> DirectedGraph {
        DirectedGraph::new(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert_eq!(DirectedGraph::empty(0), Err(GraphError::NoVertices));
        assert_eq!(DirectedGraph::new(3, [(0, 0)]), Err(GraphError::SelfLoop(0)));
        assert_eq!(
            DirectedGraph::new(3, [(0, 3)]),
            Err(GraphError::VertexOutOfRange { vertex: 3, vertex_count: 3 })
        );
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = DirectedGraph::new(3, [(0, 1), (0, 1), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.out_neighbors(0), &[1]);
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let g = DirectedGraph::new(3, [(1, 2), (0, 1)]).unwrap();
        let text = g.to_json();
        assert_eq!(text, r#"{"v":3,"edges":[[0,1],[1,2]]}"#);
        let back = DirectedGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn from_json_rejects_garbage_and_bad_edges() {
        assert!(matches!(DirectedGraph::from_json("nope"), Err(GraphError::MalformedJson(_))));
        let bad = r#"{"v":2,"edges":[[0,5]]}"#;
        assert!(matches!(
            DirectedGraph::from_json(bad),
            Err(GraphError::VertexOutOfRange { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(100, 3.0, 0.1).is_ok());
        assert_eq!(ModelParams::<f64>::new(1, 0.5, 0.1), Err(GraphError::TooFewVertices(1)));
        assert_eq!(ModelParams::<f64>::new(4, -1.0, 0.1), Err(GraphError::BadLambda(-1.0)));
        assert_eq!(ModelParams::<f64>::new(4, 8.0, 0.1), Err(GraphError::BadEdgeProbability(2.0)));
        assert_eq!(ModelParams::<f64>::new(4, 1.0, 0.0), Err(GraphError::BadEpsilon(0.0)));
        let p = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        assert_eq!(p.edge_probability(), 0.03);
        assert_eq!(p.ordered_pair_count(), 9900);
        let q = ModelParams::from_edge_probability(100, 0.03f64, 0.1).unwrap();
        assert_eq!(q.lambda(), 3.0);
    }

    #[test]
    fn bfs_on_chain_finds_the_unique_path() {
        let g = chain(4);
        let path = bfs_shortest_path(&g, 0, 3).unwrap().unwrap();
        assert_eq!(path.vertices(), &[0, 1, 2, 3]);
        assert_eq!(path.edge_count(), 3);
        assert_eq!(path.interior(), &[1, 2]);
        assert_eq!(bfs_shortest_path(&g, 3, 0).unwrap(), None);
    }

    #[test]
    fn bfs_on_edgeless_graph_finds_nothing() {
        let g = DirectedGraph::empty(5).unwrap();
        assert_eq!(bfs_shortest_path(&g, 0, 4).unwrap(), None);
    }

    #[test]
    fn bfs_tie_break_prefers_smaller_predecessor() {
        let diamond = DirectedGraph::new(4, [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let path = bfs_shortest_path(&diamond, 0, 3).unwrap().unwrap();
        assert_eq!(path.vertices(), &[0, 1, 3]);
    }

    #[test]
    fn bfs_rejects_bad_endpoints() {
        let g = chain(3);
        assert_eq!(bfs_shortest_path(&g, 1, 1), Err(GraphError::EqualEndpoints(1)));
        assert!(matches!(
            bfs_shortest_path(&g, 0, 9),
            Err(GraphError::VertexOutOfRange { .. })
        ));
    }

    #[test]
    fn closure_of_chain_and_cycle() {
        let g = chain(3);
        let closure = reachability_closure(&g);
        let expected: BTreeSet<_> = [(0, 1), (0, 2), (1, 2)].into_iter().collect();
        assert_eq!(closure, expected);

        let cycle = DirectedGraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(reachability_closure(&cycle).len(), 6);
        assert!(!reachability_closure(&cycle).contains(&(0, 0)));
    }

    #[test]
    fn closure_of_empty_graph_is_empty() {
        assert!(reachability_closure(&DirectedGraph::empty(4).unwrap()).is_empty());
    }

    #[test]
    fn er_generation_is_seeded_and_matches_p() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let a = generate_er(&params, 42);
        let b = generate_er(&params, 42);
        assert_eq!(a, b);
        assert_ne!(a, generate_er(&params, 43));

        let zero = ModelParams::new(50, 0.0f64, 0.1).unwrap();
        assert_eq!(generate_er(&zero, 7).edge_count(), 0);
        let full = ModelParams::from_edge_probability(10, 1.0f64, 0.1).unwrap();
        assert_eq!(generate_er(&full, 7).edge_count(), 90);
    }

    #[test]
    fn er_mean_edge_count_is_binomial() {
        let params = ModelParams::new(50, 2.0f64, 0.1).unwrap();
        let pairs = params.ordered_pair_count() as f64;
        let p = params.edge_probability();
        let runs = 1000;
        let total: f64 = (0..runs).map(|s| generate_er(&params, s).edge_count() as f64).sum();
        let mean = total / runs as f64;
        let sigma_mean = (pairs * p * (1.0 - p) / runs as f64).sqrt();
        assert!(
            (mean - pairs * p).abs() <= 4.0 * sigma_mean,
            "mean {mean} vs expected {} (4 sigma {})",
            pairs * p,
            4.0 * sigma_mean
        );
    }

    /// Exhaustive simple-path search, an independent oracle for BFS.
    fn min_path_len_by_enumeration(
        g: &DirectedGraph,
        src: usize,
        dst: usize,
    ) -> Option<usize> {
        fn explore(
            g: &DirectedGraph,
            here: usize,
            dst: usize,
            used: &mut Vec<bool>,
            depth: usize,
            best: &mut Option<usize>,
        ) {
            if here == dst {
                *best = Some(best.map_or(depth, |b: usize| b.min(depth)));
                return;
            }
            for &next in g.out_neighbors(here) {
                if !used[next] {
                    used[next] = true;
                    explore(g, next, dst, used, depth + 1, best);
                    used[next] = false;
                }
            }
        }
        let mut used = vec![false; g.vertex_count()];
        used[src] = true;
        let mut best = None;
        explore(g, src, dst, &mut used, 0, &mut best);
        best
    }

    fn arbitrary_graph(max_v: usize) -> impl Strategy<Value = DirectedGraph> {
        (2..=max_v).prop_flat_map(|v| {
            proptest::collection::vec(any::<bool>(), v * v).prop_map(move |bits| {
                let edges = (0..v).flat_map(|u| (0..v).map(move |w| (u, w))).zip(bits).filter_map(
                    |((u, w), on)| {
                        (on && u != w).then_some((u, w))
                    },
                );
                DirectedGraph::new(v, edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn bfs_agrees_with_exhaustive_enumeration(g in arbitrary_graph(6)) {
            for src in 0..g.vertex_count() {
                for dst in 0..g.vertex_count() {
                    if src == dst {
                        continue;
                    }
                    let found = bfs_shortest_path(&g, src, dst).unwrap();
                    let oracle = min_path_len_by_enumeration(&g, src, dst);
                    prop_assert_eq!(found.as_ref().map(|p| p.edge_count()), oracle);
                    if let Some(path) = found {
                        prop_assert_eq!(path.source(), src);
                        prop_assert_eq!(path.destination(), dst);
                        for pair in path.vertices().windows(2) {
                            prop_assert!(g.has_edge(pair[0], pair[1]));
                        }
                        let mut distinct = path.vertices().to_vec();
                        distinct.sort_unstable();
                        distinct.dedup();
                        prop_assert_eq!(distinct.len(), path.vertices().len());
                    }
                }
            }
        }

        #[test]
        fn closure_contains_edges_and_is_transitive(g in arbitrary_graph(7)) {
            let closure = reachability_closure(&g);
            for (u, v) in g.edges() {
                prop_assert!(closure.contains(&(u, v)));
            }
            for &(a, b) in &closure {
                for &(c, d) in &closure {
                    if b == c && a != d {
                        prop_assert!(closure.contains(&(a, d)));
                    }
                }
            }
        }

        #[test]
        fn json_round_trip_preserves_any_graph(g in arbitrary_graph(7)) {
            let back = DirectedGraph::from_json(&g.to_json()).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_json(), g.to_json());
        }
    }
}
