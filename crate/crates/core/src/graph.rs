//! Communication graphs and random edge selection.
//!
//! A [`Graph`] is an undirected connected graph on nodes `0..n` together with
//! a probability for every edge. At each gossip step exactly one edge is drawn
//! according to those probabilities.

use std::collections::VecDeque;
use std::io::Read;

use rand::Rng;
use thiserror::Error;

/// Tolerance on `sum(edge_probs) == 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Resample budget for [`random_geometric_graph`].
pub const GEOMETRIC_MAX_RETRIES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) listed more than once")]
    DuplicateEdge(usize, usize),
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("{probs} probabilities given for {edges} edges")]
    ProbLengthMismatch { probs: usize, edges: usize },
    #[error("edge probability {0} is not strictly positive and finite")]
    NonPositiveProb(f64),
    #[error("edge probabilities sum to {0}, expected 1")]
    ProbSum(f64),
    #[error("radius {0} outside (0, sqrt 2]")]
    BadRadius(f64),
    #[error("no connected geometric graph after {0} resamples")]
    GeometricRetriesExhausted(usize),
    #[error("edge ({0}, {1}) is not in the graph")]
    UnknownEdge(usize, usize),
    #[error("edge probability file: {0}")]
    ProbFile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    edge_probs: Vec<f64>,
    cumulative: Vec<f64>,
}

fn normalize(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Graph {
    /// Builds a graph with uniform edge probabilities.
    ///
    /// Edges may be given in any orientation and order; they are stored as
    /// `(i, j)` with `i < j` in lexicographic order.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let edges = canonical_edges(n_nodes, edges)?;
        let p = 1.0 / edges.len().max(1) as f64;
        let probs = vec![p; edges.len()];
        Self::assemble(n_nodes, edges, probs)
    }

    /// Builds a graph with explicit selection probabilities, one per edge.
    pub fn with_probs(n_nodes: usize, weighted: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self, GraphError> {
        let mut pairs: Vec<((usize, usize), f64)> = weighted.into_iter().map(|((i, j), p)| (normalize(i, j), p)).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let edges = canonical_edges(n_nodes, pairs.iter().map(|(e, _)| *e))?;
        let probs = pairs.into_iter().map(|(_, p)| p).collect();
        Self::assemble(n_nodes, edges, probs)
    }

    /// Replaces the selection probabilities, keeping the edge set.
    ///
    /// `probs` is aligned with [`Graph::edges`].
    pub fn reweighted(&self, probs: Vec<f64>) -> Result<Self, GraphError> {
        Self::assemble(self.n_nodes, self.edges.clone(), probs)
    }

    /// Reads `i,j,prob` rows (no header) and assigns them to this graph's
    /// edges. Every edge must appear exactly once.
    pub fn reweighted_from_csv<R: Read>(&self, reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut probs = vec![None; self.edges.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GraphError::ProbFile(e.to_string()))?;
            if rec.len() != 3 {
                return Err(GraphError::ProbFile(format!("row {}: expected 3 fields, got {}", line + 1, rec.len())));
            }
            let parse_idx = |s: &str| s.parse::<usize>().map_err(|e| GraphError::ProbFile(format!("row {}: {e}", line + 1)));
            let i = parse_idx(&rec[0])?;
            let j = parse_idx(&rec[1])?;
            let p: f64 = rec[2].parse().map_err(|e| GraphError::ProbFile(format!("row {}: {e}", line + 1)))?;
            let k = self.edge_index(i, j).ok_or(GraphError::UnknownEdge(i, j))?;
            if probs[k].replace(p).is_some() {
                let (a, b) = normalize(i, j);
                return Err(GraphError::DuplicateEdge(a, b));
            }
        }
        let probs = probs
            .into_iter()
            .zip(&self.edges)
            .map(|(p, &(i, j))| p.ok_or_else(|| GraphError::ProbFile(format!("no probability for edge ({i}, {j})"))))
            .collect::<Result<Vec<_>, _>>()?;
        self.reweighted(probs)
    }

    fn assemble(n_nodes: usize, edges: Vec<(usize, usize)>, probs: Vec<f64>) -> Result<Self, GraphError> {
        if n_nodes < 2 {
            return Err(GraphError::TooFewNodes { min: 2, got: n_nodes });
        }
        if probs.len() != edges.len() {
            return Err(GraphError::ProbLengthMismatch { probs: probs.len(), edges: edges.len() });
        }
        if let Some(&p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(GraphError::NonPositiveProb(p));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(GraphError::ProbSum(total));
        }
        if !is_connected(n_nodes, &edges) {
            return Err(GraphError::Disconnected);
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { n_nodes, edges, edge_probs: probs, cumulative })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Edges as `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_probs(&self) -> &[f64] {
        &self.edge_probs
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Position of `(i, j)` (either orientation) in [`Graph::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&normalize(i, j)).ok()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.n_nodes, &self.edges)
    }

    /// Draws one edge by inverting the cumulative distribution over the
    /// lexicographic edge order. Uses exactly one `f64` draw.
    pub fn sample_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.gen();
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.edges.len() - 1);
        self.edges[k]
    }
}

fn canonical_edges(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut out = Vec::new();
    for (i, j) in edges {
        for index in [i, j] {
            if index >= n_nodes {
                return Err(GraphError::NodeOutOfRange { index, n: n_nodes });
            }
        }
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        out.push(normalize(i, j));
    }
    out.sort_unstable();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
    }
    Ok(out)
}

/// Breadth-first connectivity check on an arbitrary edge list.
pub fn is_connected(n_nodes: usize, edges: &[(usize, usize)]) -> bool {
    if n_nodes == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n_nodes];
    for &(i, j) in edges {
        if i < n_nodes && j < n_nodes {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut seen = vec![false; n_nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n_nodes
}

pub fn complete_graph(n: usize) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes { min: 2, got: n });
    }
    Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
}

pub fn ring_graph(n: usize) -> Result<Graph, GraphError> {
    if n < 3 {
        return Err(GraphError::TooFewNodes { min: 3, got: n });
    }
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// `rows x cols` lattice; node `(r, c)` has index `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> Result<Graph, GraphError> {
    let n = rows * cols;
    if n < 2 {
        return Err(GraphError::TooFewNodes { min: 2, got: n });
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    Graph::new(n, edges)
}

/// Random geometric graph with node positions, as returned by
/// [`random_geometric_layout`].
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub graph: Graph,
    pub positions: Vec<[f64; 2]>,
}

/// Nodes uniform on the unit square, edge iff Euclidean distance `<= radius`.
/// Positions are resampled until the graph is connected.
pub fn random_geometric_layout<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<GeometricGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes { min: 2, got: n });
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(GraphError::BadRadius(radius));
    }
    let r2 = radius * radius;
    for _ in 0..GEOMETRIC_MAX_RETRIES {
        let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let dx = positions[i][0] - positions[j][0];
                let dy = positions[i][1] - positions[j][1];
                if dx * dx + dy * dy <= r2 {
                    edges.push((i, j));
                }
            }
        }
        if is_connected(n, &edges) {
            return Ok(GeometricGraph { graph: Graph::new(n, edges)?, positions });
        }
    }
    Err(GraphError::GeometricRetriesExhausted(GEOMETRIC_MAX_RETRIES))
}

pub fn random_geometric_graph<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Graph, GraphError> {
    random_geometric_layout(n, radius, rng).map(|g| g.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    fn bfs_oracle(g: &Graph) -> bool {
        // Union-find, independent of the BFS in `is_connected`.
        let mut parent: Vec<usize> = (0..g.n_nodes()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j) in g.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..g.n_nodes()).all(|v| find(&mut parent, v) == root)
    }

    #[test]
    fn complete_small_cases() {
        let g = complete_graph(3).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        for &p in g.edge_probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let g = complete_graph(2).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.edge_probs(), &[1.0]);
        assert_eq!(complete_graph(100).unwrap().n_edges(), 4950);
        assert!(matches!(complete_graph(1), Err(GraphError::TooFewNodes { .. })));
    }

    #[test]
    fn ring_and_grid() {
        let g = ring_graph(4).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert!(ring_graph(2).is_err());
        let g = grid_graph(2, 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(grid_graph(3, 4).unwrap().n_edges(), 3 * 3 + 2 * 4);
        assert!(grid_graph(1, 1).is_err());
    }

    #[test]
    fn geometric_is_connected() {
        let mut rng = trial_rng(1);
        let g = random_geometric_graph(20, 0.5, &mut rng).unwrap();
        assert!(g.is_connected());
        assert!(bfs_oracle(&g));
        assert!(random_geometric_graph(20, 0.0, &mut rng).is_err());
        assert!(random_geometric_graph(20, 1.5, &mut rng).is_err());
        assert_eq!(
            random_geometric_graph(50, 1e-6, &mut rng),
            Err(GraphError::GeometricRetriesExhausted(GEOMETRIC_MAX_RETRIES))
        );
    }

    #[test]
    fn connectivity() {
        assert!(ring_graph(5).unwrap().is_connected());
        assert!(!is_connected(2, &[]));
        assert!(complete_graph(10).unwrap().is_connected());
        assert!(!is_connected(4, &[(0, 1), (2, 3)]));
        assert_eq!(Graph::new(4, [(0, 1), (2, 3)]), Err(GraphError::Disconnected));
    }

    #[test]
    fn validation_errors() {
        assert_eq!(Graph::new(3, [(0, 0), (1, 2)]), Err(GraphError::SelfLoop(0)));
        assert_eq!(Graph::new(3, [(0, 1), (1, 0), (1, 2)]), Err(GraphError::DuplicateEdge(0, 1)));
        assert_eq!(Graph::new(3, [(0, 5)]), Err(GraphError::NodeOutOfRange { index: 5, n: 3 }));
        let g = complete_graph(3).unwrap();
        assert!(matches!(g.reweighted(vec![0.5, 0.5, 0.0]), Err(GraphError::NonPositiveProb(_))));
        assert!(matches!(g.reweighted(vec![0.5, 0.3, 0.3]), Err(GraphError::ProbSum(_))));
        assert!(matches!(g.reweighted(vec![0.5, 0.5]), Err(GraphError::ProbLengthMismatch { .. })));
    }

    #[test]
    fn probs_from_csv() {
        let g = complete_graph(3).unwrap();
        let w = g.reweighted_from_csv("1,0,0.5\n# comment\n0,2,0.3\n1,2,0.2\n".as_bytes()).unwrap();
        assert_eq!(w.edge_probs(), &[0.5, 0.3, 0.2]);
        assert!(g.reweighted_from_csv("0,1,0.5\n0,2,0.5\n".as_bytes()).is_err());
        assert!(g.reweighted_from_csv("0,1,0.5\n0,2,0.3\n1,3,0.2\n".as_bytes()).is_err());
    }

    #[test]
    fn single_edge_always_sampled() {
        let g = complete_graph(2).unwrap();
        let mut rng = trial_rng(3);
        assert!((0..1000).all(|_| g.sample_edge(&mut rng) == (0, 1)));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let g = complete_graph(3).unwrap();
        let mut rng = trial_rng(11);
        let draws = 300_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let (i, j) = g.sample_edge(&mut rng);
            counts[g.edge_index(i, j).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.005, "{counts:?}");
        }
    }

    #[test]
    fn weighted_sampling_frequencies() {
        let g = Graph::with_probs(3, [((0, 1), 0.5), ((0, 2), 0.3), ((1, 2), 0.2)]).unwrap();
        let mut rng = trial_rng(12);
        let draws = 200_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let (i, j) = g.sample_edge(&mut rng);
            counts[g.edge_index(i, j).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.3, 0.2]) {
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*c as f64 / draws as f64 - p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = ring_graph(7).unwrap();
        let run = |seed| {
            let mut rng = trial_rng(seed);
            (0..500).map(|_| g.sample_edge(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
